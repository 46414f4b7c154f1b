#include <algorithm>
#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "commonsense/error.hpp"
#include "commonsense/manifest.hpp"

namespace cli {

namespace {

void add_data_inputs(CLI::App* sub, DataInputs& d, bool need_ratings, bool need_models) {
  sub->add_option("--statements", d.statements, "statements.jsonl")->required();
  auto* r = sub->add_option("--ratings", d.ratings, "human_ratings.csv");
  if (need_ratings) r->required();
  auto* m = sub->add_option("--models", d.models, "model_ratings.jsonl");
  if (need_models) m->required();
  sub->add_flag("--allow-missing-features", d.allow_missing_features,
                "Warn instead of failing on statements without every feature axis");
}

int replay(const std::string& manifest_path, bool quiet) {
  namespace fs = std::filesystem;
  const auto manifest = commonsense::load_manifest(manifest_path);
  for (const auto& [path, hash] : manifest.input_hashes) {
    if (!fs::exists(path)) throw commonsense::ValidationError("replay: input '" + path + "' is missing");
    if (commonsense::sha256_file(path) != hash)
      throw commonsense::ValidationError("replay: input '" + path + "' changed since the recorded run");
  }
  const int code = dispatch(manifest.argv);
  std::size_t mismatched = 0;
  for (const auto& [path, hash] : manifest.output_hashes) {
    const bool same = fs::exists(path) && commonsense::sha256_file(path) == hash;
    if (!same) {
      ++mismatched;
      std::cerr << "replay: output differs: " << path << '\n';
    }
  }
  if (!quiet) {
    std::cout << "replay: " << manifest.output_hashes.size() - mismatched << " of "
              << manifest.output_hashes.size() << " outputs identical\n";
  }
  if (mismatched) return kExitRuntime;
  return code;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Population-agreement scoring of commonsense statements, people and models",
               "commonsense"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Master seed for every random stream")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs")->capture_default_str();
  app.add_option("--manifest", g.manifest, "Manifest path (default <out-dir>/<command>.manifest.json)");
  app.add_option("--threads", g.threads, "Worker threads, 0 = all cores")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  IngestOptions ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Validate input files and summarize them");
  add_data_inputs(s_ingest, ingest.data, false, false);
  s_ingest->add_option("--meta", ingest.meta, "model_meta.csv");

  ScoreOptions score;
  auto* s_score = app.add_subcommand("score", "Statement, person and model scores");
  add_data_inputs(s_score, score.data, true, false);
  s_score->add_flag("--with-model-vote", score.with_model_vote,
                    "Score models against the human-plus-model majority");
  s_score->add_option("--features", score.features, "Restrict to statements carrying this pole");

  CompareOptions compare;
  auto* s_compare = app.add_subcommand("compare", "Per-respondent model versus human comparison");
  add_data_inputs(s_compare, compare.data, true, true);
  s_compare->add_option("--model", compare.only_models, "Only these models (repeatable)");
  s_compare->add_flag("--skip-incomplete", compare.skip_incomplete,
                      "Skip models lacking an answer inside some respondent's statements");

  SiliconOptions silicon;
  auto* s_silicon = app.add_subcommand("silicon", "Silicon-population statement scores and errors");
  add_data_inputs(s_silicon, silicon.data, true, true);

  CorrelateOptions correlate;
  auto* s_correlate = app.add_subcommand("correlate", "Model-human correlations and split-half reliability");
  add_data_inputs(s_correlate, correlate.data, true, false);
  s_correlate->add_option("--splits", correlate.splits, "Split-half repeats, 0 to skip")->capture_default_str();

  ContrastOptions contrast;
  auto* s_contrast = app.add_subcommand("contrast", "Bootstrapped feature contrasts");
  add_data_inputs(s_contrast, contrast.data, true, false);
  s_contrast->add_option("--bootstrap-n", contrast.bootstrap_n, "Replicates")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  RegressOptions regress;
  auto* s_regress = app.add_subcommand("regress", "Size mixed model, Elo correlation and cross-validated R^2");
  s_regress->add_option("--statements", regress.data.statements, "statements.jsonl");
  s_regress->add_option("--ratings", regress.data.ratings, "human_ratings.csv");
  s_regress->add_option("--models", regress.data.models, "model_ratings.jsonl");
  s_regress->add_flag("--allow-missing-features", regress.data.allow_missing_features);
  s_regress->add_option("--meta", regress.meta, "model_meta.csv");
  s_regress->add_option("--scores", regress.scores, "Per-model scores (scores.csv or a model table)");
  s_regress->add_option("--folds", regress.folds, "Cross-validation folds")->capture_default_str();
  s_regress->add_option("--lmm-tol", regress.lmm_tol, "Variance-ratio tolerance")->capture_default_str();
  s_regress->add_option("--min-family-models", regress.min_family_models,
                        "Families need this many sized models to enter the mixed model")
      ->capture_default_str();
  s_regress->add_option("--basis", regress.basis, "SS_tot basis for R^2")
      ->check(CLI::IsMember({"held-out", "training"}))
      ->capture_default_str();
  s_regress->add_option("--bootstrap-n", regress.bootstrap_n, "Replicates for the Elo line")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  CalibrateOptions calibrate;
  auto* s_calibrate = app.add_subcommand("calibrate", "Model probability versus human frequency bins");
  add_data_inputs(s_calibrate, calibrate.data, true, true);
  s_calibrate->add_option("--bins", calibrate.bins, "Equal-width bins")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  CollectOptions collect;
  auto* s_collect = app.add_subcommand("collect", "Elicit model answers from a chat completions endpoint");
  s_collect->add_option("--statements", collect.statements, "statements.jsonl")->required();
  s_collect->add_option("--endpoint", collect.endpoint, "Base URL, e.g. https://api.openai.com")->required();
  s_collect->add_option("--model", collect.model, "Model name sent to the endpoint")->required();
  s_collect->add_option("--mode", collect.mode, "token or sampling")
      ->check(CLI::IsMember({"token", "sampling"}))
      ->capture_default_str();
  s_collect->add_option("--samples", collect.samples, "Answers per question in sampling mode")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s_collect->add_option("--choices-per-call", collect.choices_per_call, "n per sampling request")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s_collect->add_option("--top-logprobs", collect.top_logprobs)->capture_default_str();
  s_collect->add_option("--max-tokens", collect.max_tokens, "0 omits the limit")->capture_default_str();
  s_collect->add_option("--concurrency", collect.concurrency)->capture_default_str()->check(CLI::PositiveNumber);
  s_collect->add_option("--rate", collect.rate, "Requests per second, 0 = unlimited")->capture_default_str();
  s_collect->add_option("--system-prompt-file", collect.system_prompt_file);
  s_collect->add_flag("--role-clarification", collect.role_clarification,
                      "Send the built-in survey-participant system prompt");
  s_collect->add_flag("--suppress-reasoning", collect.suppress_reasoning);
  s_collect->add_flag("--most-other-people", collect.most_other_people);
  s_collect->add_option("--cache", collect.cache, "Response cache (default <out-dir>/responses.jsonl)");
  s_collect->add_option("--api-key-env", collect.api_key_env)->capture_default_str();
  s_collect->add_option("--retries", collect.retries, "Attempts per request")->capture_default_str()
      ->check(CLI::PositiveNumber);
  s_collect->add_option("--backoff-ms", collect.backoff_ms)->capture_default_str();
  s_collect->add_option("--timeout", collect.timeout_s, "Seconds per request")->capture_default_str();
  s_collect->add_option("--output", collect.output)->capture_default_str();

  SynthOptions synth;
  auto* s_synth = app.add_subcommand("synth", "Synthetic population with oracle scores");
  s_synth->add_option("--statements", synth.n_statements)->capture_default_str()->check(CLI::PositiveNumber);
  s_synth->add_option("--respondents", synth.n_respondents)->capture_default_str()->check(CLI::PositiveNumber);
  s_synth->add_option("--ratings-per-respondent", synth.ratings_per_respondent)->capture_default_str();
  s_synth->add_option("--assignment", synth.assignment)
      ->check(CLI::IsMember({"uniform", "balanced"}))
      ->capture_default_str();
  s_synth->add_option("--n-models", synth.n_models)->capture_default_str();
  s_synth->add_option("--noise", synth.noise)->capture_default_str();
  s_synth->add_option("--invalid-rate", synth.invalid_rate)->capture_default_str();

  ExportOptions exp;
  auto* s_export = app.add_subcommand("export", "Figure data files and static SVGs");
  s_export->add_option("--from", exp.from, "Directory with upstream outputs (default out-dir)");
  s_export->add_option("--panel", exp.panels, "Panels to export (repeatable); default all available");

  std::string replay_manifest;
  auto* s_replay = app.add_subcommand("replay", "Re-run a manifest and compare output hashes");
  s_replay->add_option("manifest", replay_manifest)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (s_replay->parsed()) return replay(replay_manifest, g.quiet);
  } catch (const commonsense::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }

  struct Entry {
    CLI::App* sub;
    std::function<int(Run&)> body;
  };
  const std::vector<Entry> entries = {
      {s_ingest, [&](Run& r) { return run_ingest(ingest, r); }},
      {s_score, [&](Run& r) { return run_score(score, r); }},
      {s_compare, [&](Run& r) { return run_compare(compare, r); }},
      {s_silicon, [&](Run& r) { return run_silicon(silicon, r); }},
      {s_correlate, [&](Run& r) { return run_correlate(correlate, r); }},
      {s_contrast, [&](Run& r) { return run_contrast(contrast, r); }},
      {s_regress, [&](Run& r) { return run_regress(regress, r); }},
      {s_calibrate, [&](Run& r) { return run_calibrate(calibrate, r); }},
      {s_collect, [&](Run& r) { return run_collect(collect, r); }},
      {s_synth, [&](Run& r) { return run_synth(synth, r); }},
      {s_export, [&](Run& r) { return run_export(exp, r); }},
  };
  const auto it = std::find_if(entries.begin(), entries.end(), [](const Entry& e) { return e.sub->parsed(); });
  if (it == entries.end()) {
    std::cerr << "error: no subcommand\n";
    return kExitValidation;
  }

  Run run(it->sub->get_name(), args, g);
  try {
    const int code = it->body(run);
    run.commit();
    return code;
  } catch (const commonsense::ValidationError& e) {
    run.rollback();
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    run.rollback();
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace cli

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli::dispatch(args);
}
