"""Runs the offline pipeline and validates its reports against docs/schema."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema
from referencing import Registry, Resource


def run(cli, *args):
    result = subprocess.run([cli, *args], capture_output=True, text=True)
    return result.returncode


def params(items, alphas):
    thresholds = [-1.5, -0.5, 0.5, 1.5]
    return {
        "alpha": dict(zip(items, alphas)),
        "beta": {item: thresholds for item in items},
    }


def main():
    cli, schema_dir = sys.argv[1], Path(sys.argv[2])
    schemas = {p.name: json.loads(p.read_text()) for p in schema_dir.glob("*.schema.json")}
    registry = Registry().with_resources(
        (name, Resource.from_contents(s)) for name, s in schemas.items()
    )

    def validate(path, schema_name):
        doc = json.loads(Path(path).read_text())
        validator = jsonschema.Draft202012Validator(schemas[schema_name], registry=registry)
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
        for e in errors:
            print(f"{path}: {list(e.path)}: {e.message}")
        return not errors

    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        variants = ["original", "typo", "newline", "paraphrase"]
        (d / "llm.json").write_text(json.dumps(params(variants, [1.5, 1.4, 1.6, 1.5])))
        (d / "human.json").write_text(json.dumps(params(["h1", "h2", "h3"], [1.2, 1.0, 1.4])))
        (d / "config.json").write_text(
            json.dumps({"sampler": {"chains": 2, "warmup": 200, "draws": 200}})
        )
        base = ["--config", str(d / "config.json")]
        out = ["--out", str(d / "out")]
        codes = [
            run(cli, *base, "--out", str(d / "llm.csv"), "simulate", "--subjects", "80",
                "--params", str(d / "llm.json")),
            run(cli, *base, "--out", str(d / "human.csv"), "simulate", "--subjects", "80",
                "--params", str(d / "human.json")),
            run(cli, *base, *out, "phase1", "--ratings", str(d / "llm.csv")),
            run(cli, *base, *out, "phase2", "--override-gate", "--llm", str(d / "llm.csv"),
                "--human", str(d / "human.csv")),
            run(cli, *base, *out, "report", "--phase1", str(d / "out/phase1_report.json"),
                "--phase2", str(d / "out/phase2_report.json")),
        ]
        if codes[:2] != [0, 0] or codes[2] not in (0, 2) or codes[3:] != [0, 0]:
            print(f"unexpected exit codes: {codes}")
            return 1
        ok = all([
            validate(d / "out/phase1_report.json", "phase1_report.schema.json"),
            validate(d / "out/phase2_report.json", "phase2_report.schema.json"),
            validate(d / "out/report.json", "report.schema.json"),
        ])
        print("all reports valid" if ok else "schema validation failed")
        return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
