// distillkit command-line tool.
//
// Every option has a dotted name (kd.temperature, train.batch_size, ...). A
// --config file may set any of them, either flat ("kd.alpha = 0.3") or in
// sections ("[kd]" then "alpha = 0.3"); flags on the command line win.

#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "distillkit.hpp"

namespace dk = distillkit;

namespace {

// Flattens config sections into dotted option names on the main app.
class DottedConfig : public CLI::ConfigBase {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> flat;
    for (auto item : CLI::ConfigBase::from_config(input)) {
      if (item.name == "++" || item.name == "--") continue;
      std::string name;
      for (const auto& p : item.parents)
        if (p != "default") name += p + ".";
      item.name = name + item.name;
      item.parents.clear();
      flat.push_back(std::move(item));
    }
    return flat;
  }
};

struct Options {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out;

  // run / tune / ablate
  std::string corpus, vocab;
  std::string preset = "trial_and_error";
  std::string mode = "sequential_kd";
  double contrastive_weight = dk::kDefaultContrastiveWeight;
  dk::DistillConfig kd;
  double lr_scale = dk::kDefaultLrScale;
  double chain_lr_scale = dk::kDefaultChainLrScale;
  std::string label_order;
  bool hard_only = false;
  std::size_t folds = 5;
  std::size_t feature_dim = dk::kDefaultFeatureDim;
  std::string teacher_hidden = "128,64";
  std::string student_hidden = "32";
  std::string activation = "tanh";

  // tune
  dk::SwarmConfig swarm;
  std::string space;
  std::string objective = "run";

  // generate-synthetic
  dk::SyntheticSpec synth;

  // sample
  std::size_t sample_size = 0;

  // evaluate / stats
  std::string predictions;
  std::string replications;
};

struct TrainingFlags {
  CLI::Option* temperature;
  CLI::Option* alpha;
  CLI::Option* learning_rate;
  CLI::Option* batch_size;
  CLI::Option* epochs;
  CLI::Option* max_length;
  CLI::Option* contrastive_weight;
};

dk::RunConfig resolve_run(const Options& o, const TrainingFlags& f) {
  dk::RunConfig c;
  c.corpus_path = o.corpus;
  c.vocab_path = o.vocab;
  c.preset = dk::parse_preset(o.preset);
  c.distill = dk::preset_config(c.preset);
  // An explicit value for any of the six hyperparameters turns the preset
  // into a custom configuration.
  bool overridden = false;
  auto take = [&](CLI::Option* opt, auto& field, const auto& value) {
    if (opt->count() == 0) return;
    if (field != value) overridden = true;
    field = value;
  };
  take(f.temperature, c.distill.temperature, o.kd.temperature);
  take(f.alpha, c.distill.alpha, o.kd.alpha);
  take(f.learning_rate, c.distill.learning_rate, o.kd.learning_rate);
  take(f.batch_size, c.distill.batch_size, o.kd.batch_size);
  take(f.epochs, c.distill.epochs, o.kd.epochs);
  take(f.max_length, c.distill.max_length, o.kd.max_length);
  if (overridden) c.preset = dk::Preset::custom;

  c.variant = dk::parse_variant(o.mode);
  if (f.contrastive_weight->count() > 0) c.contrastive_weight = o.contrastive_weight;
  c.folds = o.folds;
  c.seed = o.seed;
  c.feature_dim = o.feature_dim;
  c.teacher_hidden = dk::parse_size_list(o.teacher_hidden, "model.teacher_hidden");
  c.student_hidden = dk::parse_size_list(o.student_hidden, "model.student_hidden");
  if (o.activation == "tanh") {
    c.activation = dk::Activation::tanh;
  } else if (o.activation == "relu") {
    c.activation = dk::Activation::relu;
  } else {
    throw dk::UsageError("model.activation must be tanh or relu");
  }
  c.lr_scale = o.lr_scale;
  c.chain_lr_scale = o.chain_lr_scale;
  c.label_order = dk::parse_size_list(o.label_order, "train.label_order");
  c.hard_only_student = o.hard_only;
  c.workers = o.workers;
  c.validate();
  return c;
}

void report(const std::string& out_dir, const dk::OutputBundle& files) {
  for (const auto& [name, contents] : files) std::cout << out_dir << "/" << name << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge distillation for multi-label text classification", "distillkit"};
  app.set_version_flag("--version", std::string(dk::kVersion));
  app.config_formatter(std::make_shared<DottedConfig>());
  app.set_config("--config", "", "Read options from a key = value file");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", o.workers, "Maximum concurrent workers")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", o.out, "Output directory");

  app.add_option("--data.corpus", o.corpus, "Corpus file (JSON lines)");
  app.add_option("--data.vocab", o.vocab, "Label vocabulary file (one label per line)");
  app.add_option("--data.folds", o.folds, "Cross-validation folds")->capture_default_str();
  app.add_option("--data.feature_dim", o.feature_dim, "Hashed feature dimension")->capture_default_str();

  app.add_option("--preset", o.preset, "trial_and_error, pso_selected or custom")->capture_default_str();
  app.add_option("--mode", o.mode,
                 "sequential_kd, binary_relevance_kd, sequential_kd_contrastive, "
                 "binary_relevance_kd_contrastive or classifier_chains_baseline")
      ->capture_default_str();
  TrainingFlags flags{};
  flags.contrastive_weight =
      app.add_option("--contrastive_weight", o.contrastive_weight, "Contrastive weight (contrastive modes only)");
  flags.temperature = app.add_option("--kd.temperature", o.kd.temperature, "Distillation temperature");
  flags.alpha = app.add_option("--kd.alpha", o.kd.alpha, "Weight of the soft loss");
  flags.learning_rate = app.add_option("--train.learning_rate", o.kd.learning_rate, "Learning rate");
  flags.batch_size = app.add_option("--train.batch_size", o.kd.batch_size, "Mini-batch size");
  flags.epochs = app.add_option("--train.epochs", o.kd.epochs, "Epochs per label");
  flags.max_length = app.add_option("--train.max_length", o.kd.max_length, "Token cap per document");
  app.add_option("--train.lr_scale", o.lr_scale, "Multiplier on the learning rate for the neural models")
      ->capture_default_str();
  app.add_option("--train.chain_lr_scale", o.chain_lr_scale, "Multiplier on the learning rate for chain links")
      ->capture_default_str();
  app.add_option("--train.label_order", o.label_order, "Label training order as comma-separated indices");
  app.add_option("--train.hard_only", o.hard_only, "Train the student on labels only, without a teacher");
  app.add_option("--model.teacher_hidden", o.teacher_hidden, "Teacher hidden sizes")->capture_default_str();
  app.add_option("--model.student_hidden", o.student_hidden, "Student hidden sizes")->capture_default_str();
  app.add_option("--model.activation", o.activation, "tanh or relu")->capture_default_str();

  app.add_option("--pso.particles", o.swarm.particles, "Swarm size")->capture_default_str();
  app.add_option("--pso.inertia", o.swarm.inertia, "Inertia weight")->capture_default_str();
  app.add_option("--pso.cognitive", o.swarm.cognitive, "Cognitive coefficient")->capture_default_str();
  app.add_option("--pso.social", o.swarm.social, "Social coefficient")->capture_default_str();
  app.add_option("--pso.max_iters", o.swarm.max_iters, "Maximum iterations")->capture_default_str();
  app.add_option("--pso.threshold", o.swarm.threshold, "Early-stopping improvement threshold")->capture_default_str();
  app.add_option("--pso.relative_threshold", o.swarm.relative_threshold,
                 "Measure improvement relative to the previous best");
  app.add_option("--pso.patience", o.swarm.patience, "Iterations without improvement before stopping")
      ->capture_default_str();
  app.add_option("--pso.space", o.space, "Search space file (default: the six standard ranges)");
  app.add_option("--pso.objective", o.objective, "run, or the test objectives constant and sphere")
      ->capture_default_str();

  app.add_option("--synth.documents", o.synth.documents)->capture_default_str();
  app.add_option("--synth.labels", o.synth.labels)->capture_default_str();
  app.add_option("--synth.min_prevalence", o.synth.min_prevalence)->capture_default_str();
  app.add_option("--synth.max_prevalence", o.synth.max_prevalence)->capture_default_str();
  app.add_option("--synth.correlation", o.synth.correlation, "Probability a label copies its predecessor")
      ->capture_default_str();
  app.add_option("--synth.vocabulary", o.synth.vocabulary, "Filler vocabulary size")->capture_default_str();
  app.add_option("--synth.keyword_repeats", o.synth.keyword_repeats)->capture_default_str();
  app.add_option("--synth.min_tokens", o.synth.min_tokens)->capture_default_str();
  app.add_option("--synth.max_tokens", o.synth.max_tokens)->capture_default_str();

  app.add_option("--sample.size", o.sample_size, "Documents in the stratified sample");

  auto* generate = app.add_subcommand("generate-synthetic", "Write a keyword-labelled synthetic corpus");
  auto* sample = app.add_subcommand("sample", "Draw a label-stratified subset of a corpus");
  auto* run = app.add_subcommand("run", "Cross-validated training, predictions and metrics");
  auto* tune = app.add_subcommand("tune", "Particle swarm search over the hyperparameters");
  auto* evaluate = app.add_subcommand("evaluate", "Metrics for a predictions file");
  evaluate->add_option("predictions", o.predictions, "Predictions file")->required();
  auto* ablate = app.add_subcommand("ablate", "Compare the four distillation variants on shared folds");
  auto* stats = app.add_subcommand("stats", "Replication statistics");
  stats->add_option("replications", o.replications, "File of \"approach score\" lines")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(dk::ErrorKind::usage);
  }

  try {
    if (o.out.empty()) throw dk::UsageError("an output directory is required (--out)");
    const dk::ResourceMeter meter;
    dk::OutputBundle files;
    if (generate->parsed()) {
      o.synth.seed = o.seed;
      files = dk::cmd_generate_synthetic(o.synth, meter);
    } else if (sample->parsed()) {
      files = dk::cmd_sample({o.corpus, o.vocab, o.sample_size, o.seed}, meter);
    } else if (run->parsed()) {
      files = dk::cmd_run(resolve_run(o, flags), meter);
    } else if (tune->parsed()) {
      dk::TuneConfig t;
      t.objective = dk::parse_tune_objective(o.objective);
      t.run = resolve_run(o, flags);
      if (!o.space.empty()) {
        t.space_path = o.space;
        t.space = dk::stage("read space", [&] {
          auto in = dk::detail::open_input(o.space, "space");
          return dk::read_space(in);
        });
      }
      t.swarm = o.swarm;
      files = dk::cmd_tune(t, meter);
    } else if (evaluate->parsed()) {
      files = dk::cmd_evaluate(o.predictions, o.vocab.empty() ? std::nullopt : std::optional<std::string>(o.vocab),
                               meter);
    } else if (ablate->parsed()) {
      files = dk::cmd_ablate(resolve_run(o, flags), meter);
    } else if (stats->parsed()) {
      files = dk::cmd_stats(o.replications, meter);
    }
    dk::commit_outputs(o.out, files);
    report(o.out, files);
  } catch (const dk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return static_cast<int>(dk::ErrorKind::invariant);
  }
  return 0;
}
