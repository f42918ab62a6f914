#pragma once

// Experiment orchestration behind the command-line tool. Each command builds
// its output files in memory; commit_outputs then writes them under temporary
// names and renames them into place, so a failed run leaves no partial
// reports behind.

#include <sys/resource.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "distillkit/corpus.hpp"
#include "distillkit/distill.hpp"
#include "distillkit/error.hpp"
#include "distillkit/hypertune.hpp"
#include "distillkit/metrics.hpp"
#include "distillkit/model.hpp"
#include "distillkit/predictions.hpp"
#include "distillkit/stats.hpp"
#include "distillkit/synthetic.hpp"
#include "distillkit/version.hpp"

namespace distillkit {

// Rethrows any toolkit error with the failing stage prefixed, keeping its kind.
template <typename Fn>
decltype(auto) stage(std::string_view name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    const auto what = std::string(name) + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::usage: throw UsageError(what);
      case ErrorKind::data: throw DataError(what);
      case ErrorKind::invariant: throw InvariantError(what);
    }
    throw;
  }
}

// ---------------------------------------------------------------------------
// Configuration

enum class Preset { trial_and_error, pso_selected, custom };

inline std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::trial_and_error: return "trial_and_error";
    case Preset::pso_selected: return "pso_selected";
    case Preset::custom: return "custom";
  }
  return "custom";
}

inline Preset parse_preset(std::string_view name) {
  for (auto p : {Preset::trial_and_error, Preset::pso_selected, Preset::custom})
    if (to_string(p) == name) return p;
  throw UsageError("unknown preset \"" + std::string(name) + "\" (trial_and_error, pso_selected, custom)");
}

// The two named configurations; custom starts from the first.
inline DistillConfig preset_config(Preset p) {
  if (p == Preset::pso_selected) return {2.79, 0.1, 1e-5, 8, 5, 512};
  return {2.0, 0.5, 2e-5, 16, 5, 128};
}

inline std::vector<std::size_t> parse_size_list(std::string_view text, std::string_view what) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  const auto body = detail::trim(text);
  if (body.empty()) return out;
  while (start <= body.size()) {
    auto comma = body.find(',', start);
    if (comma == std::string_view::npos) comma = body.size();
    std::size_t v = 0;
    if (!detail::parse_number(detail::trim(body.substr(start, comma - start)), v))
      throw UsageError(std::string(what) + " must be a comma-separated list of non-negative integers");
    out.push_back(v);
    start = comma + 1;
  }
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct RunConfig {
  std::string corpus_path;
  std::string vocab_path;
  Preset preset = Preset::trial_and_error;
  DistillConfig distill = preset_config(Preset::trial_and_error);
  Variant variant = Variant::sequential_kd;
  std::optional<double> contrastive_weight;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::size_t feature_dim = kDefaultFeatureDim;
  std::vector<std::size_t> teacher_hidden{128, 64};
  std::vector<std::size_t> student_hidden{32};
  Activation activation = Activation::tanh;
  double lr_scale = kDefaultLrScale;
  double chain_lr_scale = kDefaultChainLrScale;
  std::vector<std::size_t> label_order;
  bool hard_only_student = false;
  std::size_t workers = 1;  // never changes results

  TrainingMode mode() const { return TrainingMode(variant, contrastive_weight); }

  EncoderSpec teacher_spec() const { return {feature_dim, teacher_hidden, activation, ModelRole::teacher}; }
  EncoderSpec student_spec() const { return {feature_dim, student_hidden, activation, ModelRole::student}; }

  TrainerOptions trainer_options(std::size_t worker_cap) const {
    return {lr_scale, chain_lr_scale, label_order, worker_cap, hard_only_student};
  }

  void validate() const {
    distill.validate();
    mode();
    if (folds < 2) throw UsageError("fold count must be at least 2");
    if (feature_dim < 2) throw UsageError("feature dimension must be at least 2");
    teacher_spec().validate();
    student_spec().validate();
    if (!(lr_scale > 0.0) || !(chain_lr_scale > 0.0)) throw UsageError("learning-rate scales must be positive");
    if (workers < 1) throw UsageError("workers must be at least 1");
  }
};

// The resolved configuration as "key = value" lines in config-file syntax.
// Worker count and output paths are left out: they never change results.
inline std::vector<std::string> config_lines(const RunConfig& c) {
  std::vector<std::string> lines;
  auto add = [&](std::string key, std::string value) { lines.push_back(std::move(key) + " = " + std::move(value)); };
  auto quoted = [](const std::string& s) { return nlohmann::json(s).dump(); };
  add("seed", std::to_string(c.seed));
  add("preset", std::string(to_string(c.preset)));
  add("mode", std::string(to_string(c.variant)));
  if (c.contrastive_weight) add("contrastive_weight", format_double(*c.contrastive_weight));
  add("kd.temperature", format_double(c.distill.temperature));
  add("kd.alpha", format_double(c.distill.alpha));
  add("train.learning_rate", format_double(c.distill.learning_rate));
  add("train.batch_size", std::to_string(c.distill.batch_size));
  add("train.epochs", std::to_string(c.distill.epochs));
  add("train.max_length", std::to_string(c.distill.max_length));
  add("train.lr_scale", format_double(c.lr_scale));
  add("train.chain_lr_scale", format_double(c.chain_lr_scale));
  add("train.label_order", quoted(join_sizes(c.label_order)));
  add("train.hard_only", c.hard_only_student ? "true" : "false");
  add("data.corpus", quoted(c.corpus_path));
  add("data.vocab", quoted(c.vocab_path));
  add("data.folds", std::to_string(c.folds));
  add("data.feature_dim", std::to_string(c.feature_dim));
  add("model.teacher_hidden", quoted(join_sizes(c.teacher_hidden)));
  add("model.student_hidden", quoted(join_sizes(c.student_hidden)));
  add("model.activation", to_string(c.activation));
  return lines;
}

// ---------------------------------------------------------------------------
// Output files

// File name -> contents, committed together.
using OutputBundle = std::map<std::string, std::string>;

inline void commit_outputs(const std::string& out_dir, const OutputBundle& files) {
  namespace fs = std::filesystem;
  if (out_dir.empty()) throw UsageError("an output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
  const auto suffix = ".tmp." + std::to_string(::getpid());
  std::vector<std::pair<fs::path, fs::path>> staged;
  auto discard = [&] {
    for (const auto& [tmp, final_path] : staged) fs::remove(tmp, ec);
  };
  for (const auto& [name, contents] : files) {
    const fs::path final_path = fs::path(out_dir) / name;
    const fs::path tmp = final_path.string() + suffix;
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    staged.emplace_back(tmp, final_path);
    out << contents;
    out.close();
    if (!out) {
      discard();
      throw DataError("cannot write " + final_path.string());
    }
  }
  for (const auto& [tmp, final_path] : staged) {
    fs::rename(tmp, final_path, ec);
    if (ec) {
      discard();
      throw DataError("cannot rename into " + final_path.string() + ": " + ec.message());
    }
  }
}

inline std::string read_file(const std::string& path, std::string_view what) {
  auto in = detail::open_input(path, what);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::vector<std::string> provenance(std::string_view command, const std::vector<std::string>& config) {
  std::vector<std::string> lines{"distillkit " + std::string(kVersion), "command = " + std::string(command)};
  lines.insert(lines.end(), config.begin(), config.end());
  return lines;
}

inline std::string comment_block(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += "# " + l + "\n";
  return s;
}

inline std::string render_predictions(const PredictionSet& p, const std::vector<std::string>& prov) {
  std::ostringstream os;
  write_predictions(os, p, prov);
  return os.str();
}

inline std::string render_report(const MetricsReport& r, const std::vector<std::string>& prov) {
  std::ostringstream os;
  write_report(os, r, prov);
  return os.str();
}

inline std::string render_corpus(const Corpus& c) {
  std::ostringstream os;
  write_corpus(os, c);
  return os.str();
}

inline std::string render_vocabulary(const LabelVocabulary& v) {
  std::ostringstream os;
  write_vocabulary(os, v);
  return os.str();
}

// Wall-clock and peak resident memory, kept out of the other outputs so those
// stay byte-identical across repeated runs.
class ResourceMeter {
 public:
  ResourceMeter() : start_(std::chrono::steady_clock::now()) {}

  std::string render(std::string_view command) const {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    rusage usage{};
    getrusage(RUSAGE_SELF, &usage);
    std::ostringstream os;
    os << "# distillkit " << kVersion << "\ncommand = " << command << "\nwall_clock_seconds = " << std::fixed
       << std::setprecision(3) << seconds << "\npeak_rss_kib = " << usage.ru_maxrss << '\n';
    return os.str();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Commands

inline Corpus load_run_corpus(const RunConfig& c) {
  if (c.corpus_path.empty() || c.vocab_path.empty()) throw UsageError("--data.corpus and --data.vocab are required");
  return stage("load corpus", [&] { return load_corpus(c.corpus_path, c.vocab_path); });
}

struct RunResult {
  FoldAssignment folds;
  PredictionSet student;
  std::optional<PredictionSet> teacher;
  MetricsReport report;
  std::optional<MetricsReport> teacher_report;
};

inline RunResult execute_run(const Corpus& corpus, const FoldAssignment& folds, const RunConfig& c,
                             std::size_t workers) {
  c.validate();
  RunResult r;
  r.folds = folds;
  const auto opts = c.trainer_options(workers);
  if (c.variant == Variant::classifier_chains_baseline) {
    r.student = stage("train", [&] {
      return baseline_classifier_chains(corpus, folds, c.distill, c.feature_dim, c.seed, opts);
    });
  } else {
    auto out = stage("train", [&] {
      return distill(corpus, folds, c.teacher_spec(), c.student_spec(), c.distill, c.mode(), c.seed, opts);
    });
    r.student = std::move(out.student);
    if (!out.teacher.empty()) r.teacher = std::move(out.teacher);
  }
  r.report = stage("evaluate", [&] { return full_report(r.student); });
  if (r.teacher) r.teacher_report = stage("evaluate teacher", [&] { return full_report(*r.teacher); });
  return r;
}

inline FoldAssignment make_folds(const Corpus& corpus, const RunConfig& c) {
  return stage("split folds", [&] { return stratified_kfold(corpus, c.folds, c.seed); });
}

inline std::string render_manifest(std::string_view command, const std::vector<std::string>& config,
                                   const std::vector<std::string>& extra) {
  std::string s = "# distillkit-manifest v1\n";
  for (const auto& l : provenance(command, config)) s += l + "\n";
  for (const auto& l : extra) s += l + "\n";
  return s;
}

inline OutputBundle cmd_run(const RunConfig& c, const ResourceMeter& meter = {}) {
  c.validate();
  const auto corpus = load_run_corpus(c);
  const auto folds = make_folds(corpus, c);
  const auto r = execute_run(corpus, folds, c, c.workers);
  const auto config = config_lines(c);
  const auto prov = provenance("run", config);
  OutputBundle out;
  out["predictions.tsv"] = render_predictions(r.student, prov);
  out["metrics.txt"] = render_report(r.report, prov);
  if (r.teacher) {
    out["teacher_predictions.tsv"] = render_predictions(*r.teacher, prov);
    out["teacher_metrics.txt"] = render_report(*r.teacher_report, prov);
  }
  out["manifest.txt"] = render_manifest("run", config,
                                        {"documents = " + std::to_string(corpus.size()),
                                         "labels = " + std::to_string(corpus.vocab.size()),
                                         "fold_fingerprint = " + folds.fingerprint(),
                                         "example_f1 = " + format_double(r.report.example_f1)});
  out["resources.txt"] = meter.render("run");
  return out;
}

inline OutputBundle cmd_evaluate(const std::string& predictions_path, const std::optional<std::string>& vocab_path,
                                 const ResourceMeter& meter = {}) {
  std::optional<LabelVocabulary> vocab;
  if (vocab_path) vocab = stage("load vocabulary", [&] { return load_vocabulary(*vocab_path); });
  const auto p = stage("read predictions", [&] {
    auto in = detail::open_input(predictions_path, "predictions");
    return read_predictions(in, vocab);
  });
  const auto report = stage("evaluate", [&] { return full_report(p); });
  std::vector<std::string> config{"predictions = " + nlohmann::json(predictions_path).dump()};
  if (vocab_path) config.push_back("vocab = " + nlohmann::json(*vocab_path).dump());
  OutputBundle out;
  out["metrics.txt"] = render_report(report, provenance("evaluate", config));
  out["resources.txt"] = meter.render("evaluate");
  return out;
}

struct SampleConfig {
  std::string corpus_path;
  std::string vocab_path;
  std::size_t size = 0;
  std::uint64_t seed = 0;
};

inline OutputBundle cmd_sample(const SampleConfig& c, const ResourceMeter& meter = {}) {
  if (c.size == 0) throw UsageError("sample size must be at least 1");
  if (c.corpus_path.empty() || c.vocab_path.empty()) throw UsageError("--data.corpus and --data.vocab are required");
  const auto corpus = stage("load corpus", [&] { return load_corpus(c.corpus_path, c.vocab_path); });
  const auto sample = stage("sample", [&] { return stratified_sample(corpus, c.size, c.seed); });
  std::vector<std::string> lines{"seed = " + std::to_string(c.seed), "sample.size = " + std::to_string(c.size),
                                 "data.corpus = " + nlohmann::json(c.corpus_path).dump(),
                                 "data.vocab = " + nlohmann::json(c.vocab_path).dump(),
                                 "source_documents = " + std::to_string(corpus.size())};
  for (std::size_t j = 0; j < corpus.vocab.size(); ++j) {
    std::ostringstream os;
    os << "prevalence " << nlohmann::json(corpus.vocab.name(j)).dump() << " source " << std::fixed
       << std::setprecision(6) << corpus.prevalence(j) << " sample " << sample.prevalence(j) << " positives "
       << sample.positives(j);
    lines.push_back(os.str());
  }
  OutputBundle out;
  out["corpus.jsonl"] = render_corpus(sample);
  out["vocab.txt"] = render_vocabulary(sample.vocab);
  out["manifest.txt"] = render_manifest("sample", {}, lines);
  out["resources.txt"] = meter.render("sample");
  return out;
}

inline OutputBundle cmd_generate_synthetic(const SyntheticSpec& spec, const ResourceMeter& meter = {}) {
  const auto corpus = stage("generate", [&] { return generate_synthetic(spec); });
  std::vector<std::string> lines{
      "seed = " + std::to_string(spec.seed),
      "synth.documents = " + std::to_string(spec.documents),
      "synth.labels = " + std::to_string(spec.labels),
      "synth.min_prevalence = " + format_double(spec.min_prevalence),
      "synth.max_prevalence = " + format_double(spec.max_prevalence),
      "synth.correlation = " + format_double(spec.correlation),
      "synth.vocabulary = " + std::to_string(spec.vocabulary),
      "synth.keyword_repeats = " + std::to_string(spec.keyword_repeats),
      "synth.min_tokens = " + std::to_string(spec.min_tokens),
      "synth.max_tokens = " + std::to_string(spec.max_tokens),
  };
  for (std::size_t j = 0; j < corpus.vocab.size(); ++j)
    lines.push_back("positives " + nlohmann::json(corpus.vocab.name(j)).dump() + " " +
                    std::to_string(corpus.positives(j)));
  OutputBundle out;
  out["corpus.jsonl"] = render_corpus(corpus);
  out["vocab.txt"] = render_vocabulary(corpus.vocab);
  out["manifest.txt"] = render_manifest("generate-synthetic", {}, lines);
  out["resources.txt"] = meter.render("generate-synthetic");
  return out;
}

// Four rows: KD loss x {sequential, binary relevance} x {with, without the
// contrastive term}, all on one fold assignment and one seed.
inline constexpr std::array<Variant, 4> kAblationVariants{
    Variant::sequential_kd, Variant::binary_relevance_kd, Variant::sequential_kd_contrastive,
    Variant::binary_relevance_kd_contrastive};

struct AblationRow {
  Variant variant;
  MetricsReport report;
  std::string fold_fingerprint;
};

inline std::vector<AblationRow> run_ablation(const Corpus& corpus, const RunConfig& c) {
  const auto folds = make_folds(corpus, c);
  std::vector<AblationRow> rows;
  for (auto v : kAblationVariants) {
    RunConfig row = c;
    row.variant = v;
    row.contrastive_weight = TrainingMode(v).is_contrastive() ? c.contrastive_weight : std::nullopt;
    auto r = execute_run(corpus, folds, row, c.workers);
    rows.push_back({v, std::move(r.report), folds.fingerprint()});
  }
  return rows;
}

inline OutputBundle cmd_ablate(const RunConfig& c, const ResourceMeter& meter = {}) {
  RunConfig base = c;
  // Validated under a contrastive variant so a contrastive weight is accepted.
  base.variant = Variant::sequential_kd_contrastive;
  base.validate();
  const auto corpus = load_run_corpus(base);
  const auto rows = run_ablation(corpus, base);
  auto config = config_lines(base);
  std::erase_if(config, [](const std::string& l) { return l.rfind("mode = ", 0) == 0; });
  const auto prov = provenance("ablate", config);

  auto fixed = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
  };
  std::string table = comment_block(prov) + "approach\tF1\tMicro F1\tMacro F1\tWeighted F1\n";
  std::vector<std::string> manifest_lines;
  for (const auto& r : rows) {
    table += std::string(to_string(r.variant)) + "\t" + fixed(r.report.example_f1) + "\t" + fixed(r.report.micro_f1) +
             "\t" + fixed(r.report.macro_f1) + "\t" + fixed(r.report.weighted_f1) + "\n";
    manifest_lines.push_back("fold_fingerprint " + std::string(to_string(r.variant)) + " = " + r.fold_fingerprint);
  }
  bool shared = true;
  for (const auto& r : rows) shared = shared && r.fold_fingerprint == rows.front().fold_fingerprint;
  if (!shared) throw InvariantError("ablation rows were run on different fold assignments");
  manifest_lines.push_back("shared_folds = true");

  OutputBundle out;
  out["ablation.tsv"] = table;
  for (const auto& r : rows) out["metrics_" + std::string(to_string(r.variant)) + ".txt"] = render_report(r.report, prov);
  out["manifest.txt"] = render_manifest("ablate", config, manifest_lines);
  out["resources.txt"] = meter.render("ablate");
  return out;
}

// ---------------------------------------------------------------------------
// Tuning

enum class TuneObjective { run, constant, sphere };

inline TuneObjective parse_tune_objective(std::string_view s) {
  if (s == "run") return TuneObjective::run;
  if (s == "constant") return TuneObjective::constant;
  if (s == "sphere") return TuneObjective::sphere;
  throw UsageError("unknown tuning objective \"" + std::string(s) + "\" (run, constant, sphere)");
}

inline std::string_view to_string(TuneObjective o) {
  switch (o) {
    case TuneObjective::run: return "run";
    case TuneObjective::constant: return "constant";
    case TuneObjective::sphere: return "sphere";
  }
  return "run";
}

struct TuneConfig {
  RunConfig run;
  HyperSpace space = HyperSpace::distillation_default();
  std::string space_path;  // empty: default space
  SwarmConfig swarm;
  TuneObjective objective = TuneObjective::run;
};

// Test objectives on the unit-normalized position: "constant" scores 0.5
// everywhere; "sphere" is minus the squared distance to the box centre.
inline double synthetic_objective(TuneObjective o, std::span<const double> x, const HyperSpace& space) {
  if (o == TuneObjective::constant) return 0.5;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& d = space.dims[i];
    const double u = (x[i] - d.lower) / (d.upper - d.lower) - 0.5;
    s += u * u;
  }
  return -s;
}

inline RunConfig decoded_run_config(const RunConfig& base, std::span<const double> position, const HyperSpace& space) {
  RunConfig c = base;
  c.distill = decode(position, space, base.distill);
  c.preset = Preset::custom;
  return c;
}

struct TuneResult {
  PsoResult pso;
  RunConfig best;
  std::string fold_fingerprint;
};

inline TuneResult run_tune(const TuneConfig& t) {
  t.run.validate();
  t.space.validate();
  SwarmConfig swarm = t.swarm;
  swarm.seed = t.run.seed;
  swarm.workers = t.run.workers;
  swarm.validate();

  std::optional<Corpus> corpus;
  std::optional<FoldAssignment> folds;
  if (t.objective == TuneObjective::run) {
    corpus = load_run_corpus(t.run);
    folds = make_folds(*corpus, t.run);
  }
  const Objective objective = [&](std::span<const double> x, std::size_t, std::size_t) {
    if (t.objective != TuneObjective::run) return synthetic_objective(t.objective, x, t.space);
    const auto c = decoded_run_config(t.run, x, t.space);
    // Particles already run concurrently, so each evaluation trains serially.
    return execute_run(*corpus, *folds, c, 1).report.example_f1;
  };
  TuneResult r;
  r.pso = stage("tune", [&] { return pso_optimize(t.space, objective, swarm); });
  r.best = decoded_run_config(t.run, r.pso.best_position, t.space);
  if (folds) r.fold_fingerprint = folds->fingerprint();
  return r;
}

inline std::vector<std::string> tune_config_lines(const TuneConfig& t) {
  auto lines = config_lines(t.run);
  const auto& s = t.swarm;
  lines.push_back("pso.objective = " + std::string(to_string(t.objective)));
  lines.push_back("pso.particles = " + std::to_string(s.particles));
  lines.push_back("pso.inertia = " + format_double(s.inertia));
  lines.push_back("pso.cognitive = " + format_double(s.cognitive));
  lines.push_back("pso.social = " + format_double(s.social));
  lines.push_back("pso.max_iters = " + std::to_string(s.max_iters));
  lines.push_back("pso.threshold = " + format_double(s.threshold));
  lines.push_back("pso.relative_threshold = " + std::string(s.relative_threshold ? "true" : "false"));
  lines.push_back("pso.patience = " + std::to_string(s.patience));
  lines.push_back("pso.space = " + nlohmann::json(t.space_path).dump());
  return lines;
}

inline std::string score_text(double v) { return std::isfinite(v) ? format_double(v) : (v > 0 ? "inf" : "-inf"); }

inline OutputBundle cmd_tune(const TuneConfig& t, const ResourceMeter& meter = {}) {
  const auto r = run_tune(t);
  const auto config = tune_config_lines(t);
  const auto prov = provenance("tune", config);

  std::string trace = comment_block(prov) + "iteration\tgbest_score";
  for (const auto& d : t.space.dims) trace += "\t" + d.name;
  trace += "\tnon_finite\n";
  for (const auto& rec : r.pso.trace) {
    trace += std::to_string(rec.iteration) + "\t" + score_text(rec.gbest_score);
    const auto decoded = decode_position(rec.gbest_pos, t.space);
    for (double v : decoded) trace += "\t" + format_double(v);
    std::string flagged;
    for (auto i : rec.non_finite) flagged += (flagged.empty() ? "" : ",") + std::to_string(i);
    trace += "\t" + (flagged.empty() ? std::string("-") : flagged) + "\n";
  }

  std::string best = comment_block(prov);
  best += "# best score " + score_text(r.pso.best_score) + "\n";
  for (const auto& l : config_lines(r.best)) best += l + "\n";

  std::vector<std::string> extra{"iterations = " + std::to_string(r.pso.trace.size()),
                                 "stopped_early = " + std::string(r.pso.stopped_early ? "true" : "false"),
                                 "best_score = " + score_text(r.pso.best_score)};
  if (!r.fold_fingerprint.empty()) extra.push_back("fold_fingerprint = " + r.fold_fingerprint);

  std::ostringstream space;
  write_space(space, t.space);

  OutputBundle out;
  out["trace.tsv"] = trace;
  out["best_config.ini"] = best;
  out["space.txt"] = space.str();
  out["manifest.txt"] = render_manifest("tune", config, extra);
  out["resources.txt"] = meter.render("tune");
  return out;
}

// ---------------------------------------------------------------------------
// Replication statistics

inline std::string percent(double v) {
  if (!std::isfinite(v)) return score_text(v);
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v * 100.0 << '%';
  return os.str();
}

// Self-check: a known mean/sd/n triple and its 95% interval to four places.
struct CiSelfCheck {
  double mean = 0.8270, sd = 0.0089;
  std::size_t n = 5;
  double expected_low = 0.8159, expected_high = 0.8380, tolerance = 1e-4;
};

inline std::string render_stats(const ReplicationSet& set, const std::vector<std::string>& prov) {
  std::ostringstream os;
  os << "# distillkit-stats v1\n" << comment_block(prov);

  os << "\n[descriptive]\napproach\tn\tmean\tsd\tmin\tmax\tci_low\tci_high\n";
  std::vector<Description> desc;
  for (std::size_t a = 0; a < set.size(); ++a) {
    const auto d = describe(set.scores[a]);
    desc.push_back(d);
    os << set.approaches[a] << '\t' << d.n << '\t' << percent(d.mean) << '\t' << percent(d.sd) << '\t'
       << percent(d.min) << '\t' << percent(d.max) << '\t' << (d.ci ? percent(d.ci->first) : "absent") << '\t'
       << (d.ci ? percent(d.ci->second) : "absent") << '\n';
  }
  os << "\n[descriptive_full]\napproach\tn\tmean\tsd\tmin\tmax\tci_low\tci_high\n";
  for (std::size_t a = 0; a < set.size(); ++a) {
    const auto& d = desc[a];
    os << set.approaches[a] << '\t' << d.n << '\t' << format_double(d.mean) << '\t' << format_double(d.sd) << '\t'
       << format_double(d.min) << '\t' << format_double(d.max) << '\t'
       << (d.ci ? format_double(d.ci->first) : "absent") << '\t' << (d.ci ? format_double(d.ci->second) : "absent")
       << '\n';
  }
  os << "\n[five_number]\napproach\tmin\tq1\tmedian\tq3\tmax\n";
  for (std::size_t a = 0; a < set.size(); ++a) {
    const auto& f = desc[a].five;
    os << set.approaches[a] << '\t' << format_double(f.min) << '\t' << format_double(f.q1) << '\t'
       << format_double(f.median) << '\t' << format_double(f.q3) << '\t' << format_double(f.max) << '\n';
  }

  // Both orders of every pair, since sign conventions differ between reports.
  os << "\n[t_test]\n# Welch, two-sided, alpha 0.05\na\tb\tmean_difference\tt_statistic\tdf\tp_value\tsignificant"
        "\tmean_difference_pct\tp_value_2dp\n";
  bool any_pair = false;
  for (std::size_t a = 0; a < set.size(); ++a)
    for (std::size_t b = 0; b < set.size(); ++b) {
      if (a == b || set.scores[a].size() < 2 || set.scores[b].size() < 2) continue;
      any_pair = true;
      const auto r = t_test(set.scores[a], set.scores[b]);
      std::ostringstream p2;
      p2 << std::fixed << std::setprecision(2) << r.p_value;
      os << set.approaches[a] << '\t' << set.approaches[b] << '\t' << format_double(r.mean_difference) << '\t'
         << score_text(r.t_statistic) << '\t' << format_double(r.df) << '\t' << format_double(r.p_value) << '\t'
         << (r.significant ? "yes" : "no") << '\t' << percent(r.mean_difference) << '\t' << p2.str() << '\n';
    }
  if (!any_pair) os << "# fewer than two approaches with two or more scores\n";

  os << "\n[anova]\n";
  std::size_t total = 0;
  for (const auto& s : set.scores) total += s.size();
  if (set.size() >= 2 && total > set.size()) {
    const auto r = anova(set.scores);
    std::ostringstream f2, p2, e2;
    f2 << std::fixed << std::setprecision(2);
    os << "f_statistic\t" << score_text(r.f_statistic) << "\np_value\t" << format_double(r.p_value) << "\neta_squared\t"
       << format_double(r.eta_squared) << "\ndf_between\t" << r.df_between << "\ndf_within\t" << r.df_within
       << "\nss_between\t" << format_double(r.ss_between) << "\nss_within\t" << format_double(r.ss_within) << '\n';
    if (std::isfinite(r.f_statistic)) f2 << r.f_statistic;
    else f2 << score_text(r.f_statistic);
    os << "summary_2dp\tF " << f2.str() << "\tp " << std::fixed << std::setprecision(2) << r.p_value << "\teta2 "
       << r.eta_squared << '\n';
  } else {
    os << "# needs two or more approaches and more scores than approaches\n";
  }

  const CiSelfCheck check;
  const auto [lo, hi] = confidence_interval(check.mean, check.sd, check.n);
  const bool ok = std::abs(lo - check.expected_low) <= check.tolerance &&
                  std::abs(hi - check.expected_high) <= check.tolerance;
  os << std::defaultfloat << "\n[self_check]\nci mean " << format_double(check.mean) << " sd "
     << format_double(check.sd) << " n " << check.n << " -> [" << std::fixed << std::setprecision(6) << lo << ", "
     << hi << "] expected [" << std::setprecision(4) << check.expected_low << ", " << check.expected_high << "] "
     << (ok ? "ok" : "FAILED") << '\n';
  if (!ok) throw InvariantError("confidence-interval self-check failed");
  return os.str();
}

inline OutputBundle cmd_stats(const std::string& replications_path, const ResourceMeter& meter = {}) {
  const auto set = stage("read replications", [&] {
    auto in = detail::open_input(replications_path, "replications");
    return read_replications(in);
  });
  const auto prov = provenance("stats", {"replications = " + nlohmann::json(replications_path).dump()});
  OutputBundle out;
  out["stats.txt"] = stage("stats", [&] { return render_stats(set, prov); });
  out["resources.txt"] = meter.render("stats");
  return out;
}

}  // namespace distillkit
