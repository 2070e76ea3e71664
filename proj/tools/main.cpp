#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "judgeirt/pipeline.hpp"

namespace fs = std::filesystem;
using namespace judgeirt;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 42;
  std::string config;
  std::string out;
};

// Config file first, then explicit command-line overrides.
PipelineConfig make_config(const GlobalOptions& g, const CLI::App& app) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_pipeline_config(g.config);
  if (app.get_option("--seed")->count() > 0 || g.config.empty()) {
    c.seed = g.seed;
    c.sampler.seed = g.seed;
  }
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

fs::path require_path(const std::string& cli_value, const fs::path& config_value,
                      const std::string& flag) {
  if (!cli_value.empty()) return cli_value;
  if (!config_value.empty()) return config_value;
  throw InputError("missing required " + flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reliability diagnostics for rating-based LLM judges"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config, "Pipeline config JSON");
  app.add_option("--out", g.out,
                 "Output file (perturb, collect, simulate) or directory (other commands)");

  std::string template_path;
  std::vector<std::string> protect;
  auto* perturb = app.add_subcommand("perturb", "Generate typo/newline/paraphrase variants");
  perturb->add_option("--template", template_path, "Prompt template text file");
  perturb->add_option("--protect", protect, "Extra protected words");

  std::string variants_path, subjects_path, schema_path, endpoint, model, cache_dir, api_path;
  int max_concurrency = -1, max_retries = -1;
  double timeout = -1.0;
  auto* collect = app.add_subcommand("collect", "Collect judge ratings over HTTP");
  collect->add_option("--variants", variants_path, "VariantSet JSON")->required();
  collect->add_option("--subjects", subjects_path, "Subjects JSON")->required();
  collect->add_option("--endpoint", endpoint, "Base URL, e.g. http://localhost:8000");
  collect->add_option("--path", api_path, "Request path (default /v1/chat/completions)");
  collect->add_option("--model", model, "Model name");
  collect->add_option("--schema", schema_path, "Rating schema JSON")->required();
  collect->add_option("--cache-dir", cache_dir, "Response cache directory");
  collect->add_option("--max-concurrency", max_concurrency, "Concurrent requests");
  collect->add_option("--max-retries", max_retries, "Retries per request");
  collect->add_option("--timeout", timeout, "Request timeout in seconds");

  std::string params_path, sim_criterion;
  int num_subjects = 0;
  auto* simulate = app.add_subcommand("simulate", "Simulate ratings from known parameters");
  simulate->add_option("--params", params_path, "True parameters JSON");
  simulate->add_option("--subjects", num_subjects, "Number of subjects")->required();
  simulate->add_option("--criterion", sim_criterion, "Criterion name");

  std::string ratings_path, criterion, draws_out;
  bool allow_bad_fit = false;
  auto* fit = app.add_subcommand("fit", "Fit the GRM (or 2PL) and write diagnostics");
  fit->add_option("--ratings", ratings_path, "Ratings CSV or JSON");
  fit->add_option("--criterion", criterion, "Criterion to fit");
  fit->add_option("--draws-out", draws_out, "Write posterior draws JSON here");
  fit->add_flag("--allow-bad-fit", allow_bad_fit, "Do not fail on R-hat or divergence flags");

  auto* phase1 = app.add_subcommand("phase1", "Prompt consistency and marginal reliability");
  phase1->add_option("--ratings", ratings_path, "LLM ratings over the four variants");
  phase1->add_option("--criterion", criterion, "Criterion");

  std::string human_path, phase1_report;
  bool override_gate = false;
  auto* phase2 = app.add_subcommand("phase2", "Human alignment");
  phase2->add_option("--llm", ratings_path, "LLM ratings");
  phase2->add_option("--human", human_path, "Human ratings");
  phase2->add_option("--criterion", criterion, "Criterion");
  phase2->add_option("--phase1", phase1_report, "Phase 1 report JSON");
  phase2->add_flag("--override-gate", override_gate, "Run even if Phase 1 did not pass");

  std::string report_p1, report_p2;
  auto* report = app.add_subcommand("report", "Validate phase reports and render Markdown");
  report->add_option("--phase1", report_p1, "Phase 1 report JSON");
  report->add_option("--phase2", report_p2, "Phase 2 report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    auto config = make_config(g, app);
    if (!criterion.empty()) config.criterion = criterion;

    if (perturb->parsed()) {
      auto protected_words = config.protected_words;
      protected_words.insert(protected_words.end(), protect.begin(), protect.end());
      const fs::path out = g.out.empty() ? config.output_dir / "variants.json" : fs::path(g.out);
      cmd_perturb(require_path(template_path, config.template_path, "--template"), config.seed,
                  out, protected_words);
      std::cout << "wrote " << out.string() << "\n";
    } else if (collect->parsed()) {
      auto ep = config.endpoint;
      if (!endpoint.empty()) ep.base_url = endpoint;
      if (!api_path.empty()) ep.path = api_path;
      if (!model.empty()) ep.model = model;
      if (max_concurrency >= 0) ep.max_concurrency = max_concurrency;
      if (max_retries >= 0) ep.max_retries = max_retries;
      if (timeout > 0) ep.timeout_seconds = timeout;
      CollectOptions opts;
      opts.seed = config.seed;
      opts.cache_dir = cache_dir.empty() ? config.cache_dir : fs::path(cache_dir);
      const fs::path out = g.out.empty() ? config.output_dir / "ratings.csv" : fs::path(g.out);
      auto result = cmd_collect(variants_path, subjects_path, ep, schema_path, out, opts);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "wrote " << out.string() << " (" << result.ratings.size() << " observations, "
                << result.missing.size() << " missing cells, " << result.network_calls
                << " network calls)\n";
    } else if (simulate->parsed()) {
      const fs::path out = g.out.empty() ? config.output_dir / "ratings.csv" : fs::path(g.out);
      auto d = cmd_simulate(require_path(params_path, config.params_path, "--params"),
                            num_subjects, config.seed, out,
                            sim_criterion.empty() ? config.criterion : sim_criterion);
      std::cout << "wrote " << out.string() << " (" << d.size() << " observations)\n";
    } else if (fit->parsed()) {
      std::optional<fs::path> draws;
      if (!draws_out.empty()) draws = draws_out;
      auto out = cmd_fit(require_path(ratings_path, config.ratings_path, "--ratings"), config,
                         draws, allow_bad_fit);
      for (const auto& w : out.fit.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "wrote " << out.summary_path.string() << " and "
                << out.diagnostics_path.string() << "\n";
    } else if (phase1->parsed()) {
      auto r = cmd_phase1(require_path(ratings_path, config.ratings_path, "--ratings"), config);
      std::cout << "Phase 1 verdict: " << (r.pass ? "pass" : "fail") << "\n";
    } else if (phase2->parsed()) {
      std::optional<fs::path> p1;
      if (!phase1_report.empty()) p1 = phase1_report;
      auto r = cmd_phase2(require_path(ratings_path, config.ratings_path, "--llm"),
                          require_path(human_path, config.human_ratings_path, "--human"), p1,
                          config, override_gate);
      std::cout << "theta_ratio = " << r.theta_ratio << ", D_W = " << r.d_wasserstein << "\n";
    } else if (report->parsed()) {
      std::optional<fs::path> p1, p2;
      if (!report_p1.empty()) p1 = report_p1;
      if (!report_p2.empty()) p2 = report_p2;
      cmd_report(p1, p2, config.output_dir);
      std::cout << "wrote " << (config.output_dir / "report.md").string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
