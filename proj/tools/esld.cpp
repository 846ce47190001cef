// esld: batch entry point for the latent-space injection detector.
//
//   esld audit   leakage audit and admission verdicts for candidate sources
//   esld loso    inner audit, layer selection and outer LOSO evaluation
//   esld report  detection + latency table with aggregate footer
//   esld fit     fit a probe on explicit feature files
//   esld score   apply a saved probe to a feature file

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "esld/esld.hpp"

namespace {

template <typename T>
std::optional<T> opt_if(bool set, const T& value) {
  return set ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space prompt-injection detector: audit, evaluate and report"};
  app.require_subcommand(1);
  const std::size_t threads = esld::detail::worker_count();

  // audit
  esld::AuditCommandConfig audit;
  std::string audit_out, audit_recheck;
  auto* audit_cmd = app.add_subcommand("audit", "Leakage audit over candidate sources");
  audit_cmd->add_option("--manifest", audit.manifest,
                        "JSONL: source_id, class, pool, documents (JSONL), embeddings (feature file)");
  audit_cmd->add_option("--recheck", audit_recheck, "Re-apply admission to an existing audit report CSV");
  audit_cmd->add_option("--out", audit_out, "Report CSV path (stdout when omitted)");
  audit_cmd->add_option("--ngram", audit.thresholds.ngram_long, "Admission n-gram size")->capture_default_str();
  audit_cmd->add_option("--ngram-short", audit.thresholds.ngram_short, "Diagnostic n-gram size")
      ->capture_default_str();
  audit_cmd->add_option("--contamination-ceiling", audit.thresholds.contamination_ceiling)->capture_default_str();
  audit_cmd->add_option("--cos-loose", audit.thresholds.cos_loose)->capture_default_str();
  audit_cmd->add_option("--cos-strict", audit.thresholds.cos_strict)->capture_default_str();
  audit_cmd->add_option("--dup-ceiling", audit.thresholds.dup_ceiling)->capture_default_str();
  audit_cmd->add_flag("--fail-on-reject", audit.fail_on_reject, "Exit with status 3 if any source is rejected");

  // loso
  esld::LosoCommandConfig loso;
  std::string pool_name = "UPIA", out_dir = ".", verdicts_path;
  std::uint32_t host_layers = 0;
  auto* loso_cmd = app.add_subcommand("loso", "Two-axis leave-one-source-out run with Pareto layer selection");
  loso_cmd->add_option("--manifest", loso.manifest, "Feature manifest (JSONL)")->required();
  loso_cmd->add_option("--pool", pool_name, "UPIA or XPIA")->capture_default_str();
  loso_cmd->add_option("--layers", loso.layers, "Candidate layers (0-indexed)")->delimiter(',');
  loso_cmd->add_option("--epsilon", loso.epsilon, "Pareto tolerance")->capture_default_str();
  loso_cmd->add_option("--seeds", loso.seeds, "Training seeds")->delimiter(',');
  loso_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  loso_cmd->add_option("--host", loso.host, "Host model name recorded in the report");
  loso_cmd->add_option("--host-layers", host_layers, "Total decoder layers of the host");
  loso_cmd->add_option("--host-verdicts", verdicts_path, "JSONL of prompt_id, verdict (safe/unsafe/unparsed)");
  loso_cmd->add_option("--sample-cap", loso.sample_cap, "Per-class training rows")->capture_default_str();
  loso_cmd->add_option("--ablation", loso.ablation_epsilons, "Extra tolerances to evaluate")->delimiter(',');
  loso_cmd->add_flag_function("--no-timestamp", [&](std::int64_t) { loso.timestamp = false; }, "Omit generated_at");

  // report
  esld::ReportCommandConfig report;
  std::string timing_path;
  auto* report_cmd = app.add_subcommand("report", "Combine LOSO reports and timing records");
  report_cmd->add_option("--loso", report.loso_reports, "LOSO report JSON (repeatable)")->required();
  report_cmd->add_option("--timing", timing_path, "Timing records (JSONL)");
  report_cmd->add_option("--iterations", report.expected_iterations, "Timed iterations per record")
      ->capture_default_str();

  // fit
  esld::FitCommandConfig fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a probe on feature files");
  fit_cmd->add_option("--attack", fit.attack_files, "Feature files of attack prompts");
  fit_cmd->add_option("--benign", fit.benign_files, "Feature files of benign prompts");
  fit_cmd->add_option("--features", fit.labeled_files, "Feature files split by per-record label");
  fit_cmd->add_option("--out", fit.out, "Model path (JSON line)")->required();

  // score
  esld::ScoreCommandConfig score;
  auto* score_cmd = app.add_subcommand("score", "Score a feature file with a saved probe");
  score_cmd->add_option("--model", score.model)->required();
  score_cmd->add_option("--features", score.features)->required();
  score_cmd->add_flag("--allow-layer-mismatch", score.allow_layer_mismatch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? esld::kExitOk : esld::kExitUsage;
  }

  try {
    if (*audit_cmd) {
      if (audit.manifest.empty() && audit_recheck.empty()) {
        throw esld::UsageError("audit needs --manifest or --recheck");
      }
      audit.out = opt_if<std::filesystem::path>(!audit_out.empty(), audit_out);
      audit.recheck = opt_if<std::filesystem::path>(!audit_recheck.empty(), audit_recheck);
      audit.threads = threads;
      return esld::cmd_audit(audit, std::cout, std::cerr);
    }
    if (*loso_cmd) {
      loso.pool = esld::parse_pool_kind(pool_name);
      loso.out_dir = out_dir;
      loso.host_layers = opt_if(host_layers > 0, host_layers);
      loso.host_verdicts = opt_if<std::filesystem::path>(!verdicts_path.empty(), verdicts_path);
      loso.threads = threads;
      return esld::cmd_loso(loso, std::cerr);
    }
    if (*report_cmd) {
      report.timing = opt_if<std::filesystem::path>(!timing_path.empty(), timing_path);
      return esld::cmd_report(report, std::cout, std::cerr);
    }
    if (*fit_cmd) return esld::cmd_fit(fit, std::cerr);
    if (*score_cmd) return esld::cmd_score(score, std::cout, std::cerr);
  } catch (const esld::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return esld::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return esld::kExitFailure;
  }
  return esld::kExitUsage;
}
