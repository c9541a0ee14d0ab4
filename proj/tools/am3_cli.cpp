// am3: command-line driver for dataset generation, training, evaluation,
// mixing-coefficient statistics, conditioning ablations and plots.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "am3/am3.hpp"

namespace fs = std::filesystem;
using namespace am3;

namespace {

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

struct DataOptions {
  std::string dataset;
  std::string embeddings;
  std::uint64_t split_seed = 0;
  std::uint64_t label_seed = 0;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
};

struct EpisodeOptions {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t k_query = 5;
};

struct ModelOptions {
  std::string mode = "w";
  std::string distance = "sq-euclid";
  std::string rule = "adaptive";
  std::optional<double> lambda_fixed;
  std::size_t proto_dim = 32;
  std::vector<std::size_t> encoder_hidden{64};
  std::size_t semantic_hidden = 300;
  std::size_t mixer_hidden = 300;
};

struct TrainOptions {
  std::size_t iterations = 600;
  double lr = 0.005;
  double momentum = 0.9;
  std::vector<std::size_t> anneal_steps;
  double anneal_factor = 10.0;
  std::size_t tasks_per_batch = 1;
  std::size_t queries_per_batch = 0;
  double dropout_keep = 0.7;
};

struct EvalOptions {
  std::size_t episodes = 500;
  std::size_t queries = 20;
  std::string split = "test";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_flag("--print-config", "Print the effective configuration and exit");
  cmd->add_option("--seed", o.seed, "Seed for every random choice of this command")->capture_default_str();
  cmd->add_option("--out-dir", o.out_dir, "Directory for output files")->capture_default_str();
}

void add_data(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--dataset", o.dataset, "Dataset root (directory with a manifest)")->required();
  cmd->add_option("--embeddings", o.embeddings, "Word-embedding text file")->required();
  cmd->add_option("--split-seed", o.split_seed, "Seed of the train/val/test category split")->capture_default_str();
  cmd->add_option("--label-seed", o.label_seed, "Seed of out-of-vocabulary label vectors")->capture_default_str();
  cmd->add_option("--train-fraction", o.train_fraction)->capture_default_str();
  cmd->add_option("--val-fraction", o.val_fraction)->capture_default_str();
  cmd->add_option("--test-fraction", o.test_fraction)->capture_default_str();
}

void add_episode(CLI::App* cmd, EpisodeOptions& o) {
  cmd->add_option("--n-way", o.n_way, "Categories per episode")->capture_default_str();
  cmd->add_option("--k-shot", o.k_shot, "Support samples per category")->capture_default_str();
  cmd->add_option("--k-query", o.k_query, "Query samples per category during training")->capture_default_str();
}

void add_model(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--mode", o.mode, "Mixing-network conditioning")
      ->check(CLI::IsMember({"w", "e", "p", "wq"}))
      ->capture_default_str();
  cmd->add_option("--distance", o.distance)->check(CLI::IsMember({"sq-euclid", "euclid"}))->capture_default_str();
  cmd->add_option("--rule", o.rule, "Prototype rule")
      ->check(CLI::IsMember({"adaptive", "alignment"}))
      ->capture_default_str();
  cmd->add_option("--lambda-fixed", o.lambda_fixed, "Fix every mixing coefficient (1.0 = visual-only control)")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--proto-dim", o.proto_dim)->capture_default_str();
  cmd->add_option("--encoder-hidden", o.encoder_hidden, "Encoder hidden widths")->delimiter(',')->capture_default_str();
  cmd->add_option("--semantic-hidden", o.semantic_hidden)->capture_default_str();
  cmd->add_option("--mixer-hidden", o.mixer_hidden)->capture_default_str();
}

void add_train(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--iterations", o.iterations)->capture_default_str();
  cmd->add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--momentum", o.momentum)->capture_default_str();
  cmd->add_option("--anneal-steps", o.anneal_steps, "Iterations at which the rate drops (default: 1/2 and 3/4 of the run)")
      ->delimiter(',');
  cmd->add_option("--anneal-factor", o.anneal_factor)->capture_default_str();
  cmd->add_option("--tasks-per-batch", o.tasks_per_batch)->capture_default_str();
  cmd->add_option("--queries-per-batch", o.queries_per_batch, "Queries per task (0: n-way * k-query)")
      ->capture_default_str();
  cmd->add_option("--dropout-keep", o.dropout_keep)->capture_default_str();
}

void add_eval(CLI::App* cmd, EvalOptions& o) {
  cmd->add_option("--episodes", o.episodes)->capture_default_str();
  cmd->add_option("--queries", o.queries, "Queries per evaluation episode")->capture_default_str();
  cmd->add_option("--split", o.split, "Category split to evaluate on")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
}

// Defaults of list options print as a quoted "[a,b]"; values read back from a
// file print as [a, b] or a bare item. Emit the latter form in both cases.
std::string canonical_list(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) return line;
  const std::string value = line.substr(eq + 1);
  if (value.size() < 4 || value.rfind("\"[", 0) != 0 || !value.ends_with("]\"")) return line;
  std::vector<std::string> items;
  for (auto part : text::split(std::string_view(value).substr(2, value.size() - 4), ',')) {
    std::string item(text::trim(part));
    // Quote non-numeric items the way the config writer quotes strings.
    if (!text::parse_double(item)) item = item.size() == 1 ? "'" + item + "'" : "\"" + item + "\"";
    items.push_back(std::move(item));
  }
  std::string out = line.substr(0, eq + 1);
  if (items.size() == 1) return out + items[0];
  out += '[';
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + ']';
}

// Returns true (after printing) when --print-config was given. The output
// is a config file with one section for this subcommand; unset optional
// values and the print flag itself are left out so it can be fed back via
// --config.
bool maybe_print_config(const CLI::App* cmd) {
  if (cmd->count("--print-config") == 0) return false;
  std::istringstream all(cmd->config_to_str(true, false));
  std::string line;
  std::cout << '[' << cmd->get_name() << "]\n";
  while (std::getline(all, line)) {
    if (line.rfind("print-config=", 0) == 0 || line.ends_with("=\"\"")) continue;
    std::cout << canonical_list(line) << '\n';
  }
  return true;
}

struct LoadedData {
  LabeledDataset dataset;
  EmbeddingTable table;
  LabelEmbeddings labels;
  CategorySplit split;
};

LoadedData load_data(const DataOptions& o, std::size_t min_per_split, std::size_t fallback_dim = 0) {
  LoadedData d;
  d.dataset = load_dataset(o.dataset);
  std::ifstream in(o.embeddings);
  if (!in) throw IoError("cannot read embeddings " + o.embeddings);
  d.table = parse_embedding_file(in);
  d.labels = LabelEmbeddings::resolve(d.dataset, d.table, o.label_seed, fallback_dim);
  d.split = split_categories(d.dataset, {o.train_fraction, o.val_fraction, o.test_fraction}, o.split_seed,
                             min_per_split);
  return d;
}

const std::vector<CategoryId>& pick_split(const CategorySplit& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  return s.test;
}

ModelConfig make_model_config(const ModelOptions& m, const TrainOptions& t, const LoadedData& d, std::uint64_t seed) {
  ModelConfig c;
  c.visual_dim = d.dataset.feature_dimension;
  c.word_dim = d.labels.dimension();
  c.proto_dim = m.proto_dim;
  c.encoder_hidden = m.encoder_hidden;
  c.semantic_hidden = m.semantic_hidden;
  c.mixer_hidden = m.mixer_hidden;
  c.dropout_keep = t.dropout_keep;
  c.mode = parse_conditioning_mode(m.mode);
  c.distance = parse_distance_kind(m.distance);
  c.rule = parse_prototype_rule(m.rule);
  c.lambda_fixed = m.lambda_fixed;
  c.seed = seed;
  return c;
}

TrainConfig make_train_config(const TrainOptions& t, const EpisodeOptions& e, std::uint64_t seed) {
  TrainConfig c;
  c.iterations = t.iterations;
  c.initial_lr = t.lr;
  c.momentum = t.momentum;
  c.anneal_steps = t.anneal_steps.empty() ? default_anneal_steps(t.iterations) : t.anneal_steps;
  c.anneal_factor = t.anneal_factor;
  c.tasks_per_batch = t.tasks_per_batch;
  c.queries_per_batch = t.queries_per_batch;
  c.episode = {e.n_way, e.k_shot, e.k_query};
  c.dropout_keep = t.dropout_keep;
  c.seed = seed;
  return c;
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

void check_model_matches(const Am3Model& model, const LoadedData& d) {
  const auto& c = model.config();
  if (c.visual_dim != d.dataset.feature_dimension) {
    throw DimensionError("checkpoint expects visual dimension " + std::to_string(c.visual_dim) +
                         ", dataset has " + std::to_string(d.dataset.feature_dimension));
  }
  if (c.word_dim != d.labels.dimension()) {
    throw DimensionError("checkpoint expects word dimension " + std::to_string(c.word_dim) + ", embeddings have " +
                         std::to_string(d.labels.dimension()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive modality mixture few-shot learning"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a config file; command-line flags take precedence");

  // synth-gen
  CommonOptions gen_common;
  SyntheticTaskSpec spec;
  auto* gen = app.add_subcommand("synth-gen", "Generate a synthetic cross-modal dataset and embedding file");
  add_common(gen, gen_common);
  gen->add_option("--categories", spec.n_categories)->capture_default_str();
  gen->add_option("--visual-dim", spec.visual_dim)->capture_default_str();
  gen->add_option("--semantic-dim", spec.semantic_dim)->capture_default_str();
  gen->add_option("--visual-spread", spec.visual_spread)->capture_default_str();
  gen->add_option("--visual-separation", spec.visual_separation)->capture_default_str();
  gen->add_option("--semantic-separation", spec.semantic_separation)->capture_default_str();
  gen->add_option("--semantic-noise", spec.semantic_noise)->capture_default_str();
  gen->add_option("--samples", spec.samples_per_category, "Samples per category")->capture_default_str();

  // train
  CommonOptions train_common;
  DataOptions train_data;
  EpisodeOptions train_episode;
  ModelOptions train_model;
  TrainOptions train_opts;
  std::string train_checkpoint;
  auto* train_cmd = app.add_subcommand("train", "Train a model episodically and write a checkpoint");
  add_common(train_cmd, train_common);
  add_data(train_cmd, train_data);
  add_episode(train_cmd, train_episode);
  add_model(train_cmd, train_model);
  add_train(train_cmd, train_opts);
  train_cmd->add_option("--checkpoint", train_checkpoint, "Checkpoint path (default: <out-dir>/model.ckpt)");

  // eval
  CommonOptions eval_common;
  DataOptions eval_data;
  EpisodeOptions eval_episode;
  EvalOptions eval_opts;
  std::string eval_checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on held-out episodes");
  add_common(eval_cmd, eval_common);
  add_data(eval_cmd, eval_data);
  add_episode(eval_cmd, eval_episode);
  add_eval(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();

  // lambda-stats
  CommonOptions lam_common;
  DataOptions lam_data;
  EpisodeOptions lam_episode;
  EvalOptions lam_opts;
  std::string lam_checkpoint;
  std::vector<std::size_t> lam_shots{1, 5, 10};
  auto* lam_cmd = app.add_subcommand("lambda-stats", "Mixing-coefficient mean and spread per shot count");
  add_common(lam_cmd, lam_common);
  add_data(lam_cmd, lam_data);
  add_episode(lam_cmd, lam_episode);
  add_eval(lam_cmd, lam_opts);
  lam_cmd->add_option("--checkpoint", lam_checkpoint)->required();
  lam_cmd->add_option("--shots", lam_shots, "Shot counts to evaluate")->delimiter(',')->capture_default_str();

  // ablate
  CommonOptions abl_common;
  DataOptions abl_data;
  EpisodeOptions abl_episode;
  ModelOptions abl_model;
  TrainOptions abl_train;
  EvalOptions abl_eval;
  std::vector<std::string> abl_modes{"w", "e", "p", "wq"};
  auto* abl_cmd = app.add_subcommand("ablate", "Train and evaluate one model per conditioning mode");
  add_common(abl_cmd, abl_common);
  add_data(abl_cmd, abl_data);
  add_episode(abl_cmd, abl_episode);
  add_model(abl_cmd, abl_model);
  add_train(abl_cmd, abl_train);
  add_eval(abl_cmd, abl_eval);
  abl_cmd->add_option("--modes", abl_modes, "Conditioning modes (w, e, p, wq)")->delimiter(',')->capture_default_str();

  // plot
  CommonOptions plot_common;
  std::string plot_csv, plot_kind = "lambda-vs-shots", plot_output;
  auto* plot_cmd = app.add_subcommand("plot", "Render a shot-sweep CSV as an SVG line chart");
  add_common(plot_cmd, plot_common);
  plot_cmd->add_option("--csv", plot_csv)->required();
  plot_cmd->add_option("--kind", plot_kind)
      ->check(CLI::IsMember({"accuracy-vs-shots", "lambda-vs-shots"}))
      ->capture_default_str();
  plot_cmd->add_option("--output", plot_output, "SVG path (default: <out-dir>/plot.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      if (maybe_print_config(gen)) return 0;
      spec.seed = gen_common.seed;
      const auto task = generate_synthetic_crossmodal(spec);
      const auto out = ensure_dir(gen_common.out_dir);
      write_dataset(task.dataset, out / "dataset");
      std::ostringstream emb;
      write_embedding_file(emb, task.embeddings);
      write_file(out / "embeddings.txt", emb.str());
      std::cout << "seed " << spec.seed << '\n';
      return 0;
    }

    if (*train_cmd) {
      if (maybe_print_config(train_cmd)) return 0;
      const auto data = load_data(train_data, train_episode.n_way);
      const auto tc = make_train_config(train_opts, train_episode, train_common.seed);
      Am3Model model(make_model_config(train_model, train_opts, data, train_common.seed));
      const auto trace = train(model, data.dataset, data.split.train, data.labels, tc);
      const auto out = ensure_dir(train_common.out_dir);
      save_checkpoint(model, train_checkpoint.empty() ? out / "model.ckpt" : fs::path(train_checkpoint));
      std::ostringstream csv;
      csv::write_loss_trace(csv, trace);
      write_file(out / "loss_trace.csv", csv.str());
      return 0;
    }

    if (*eval_cmd) {
      if (maybe_print_config(eval_cmd)) return 0;
      const auto model = load_checkpoint(eval_checkpoint);
      const auto data = load_data(eval_data, eval_episode.n_way, model.config().word_dim);
      check_model_matches(model, data);
      const auto report = evaluate(model, data.dataset, pick_split(data.split, eval_opts.split), data.labels,
                                   {eval_episode.n_way, eval_episode.k_shot, eval_episode.k_query}, eval_opts.episodes,
                                   eval_opts.queries, eval_common.seed);
      if (!report.ci95_defined) std::cerr << "warning: a single episode has no confidence interval; ci95 reported as 0\n";
      std::ostringstream csv;
      csv::write_eval_header(csv);
      csv::write_eval_row(csv, report);
      const auto out = ensure_dir(eval_common.out_dir);
      write_file(out / "eval.csv", csv.str());
      std::ostringstream episodes;
      csv::write_episode_accuracies(episodes, report);
      write_file(out / "eval_episodes.csv", episodes.str());
      std::cout << csv.str();
      return 0;
    }

    if (*lam_cmd) {
      if (maybe_print_config(lam_cmd)) return 0;
      const auto model = load_checkpoint(lam_checkpoint);
      const auto data = load_data(lam_data, lam_episode.n_way, model.config().word_dim);
      check_model_matches(model, data);
      if (lam_opts.queries % lam_episode.n_way != 0) {
        throw ConfigError("--queries must be a multiple of --n-way");
      }
      const auto rows = lambda_statistics(model, data.dataset, pick_split(data.split, lam_opts.split), data.labels,
                                          lam_shots, lam_episode.n_way, lam_opts.queries / lam_episode.n_way,
                                          lam_opts.episodes, lam_common.seed);
      std::ostringstream csv;
      csv::write_lambda_rows(csv, rows);
      write_file(ensure_dir(lam_common.out_dir) / "lambda_stats.csv", csv.str());
      std::cout << csv.str();
      return 0;
    }

    if (*abl_cmd) {
      if (maybe_print_config(abl_cmd)) return 0;
      std::vector<ConditioningMode> modes;
      for (const auto& m : abl_modes) modes.push_back(parse_conditioning_mode(m));
      const auto data = load_data(abl_data, abl_episode.n_way);
      Experiment exp;
      exp.dataset = &data.dataset;
      exp.labels = &data.labels;
      exp.split = data.split;
      exp.model = make_model_config(abl_model, abl_train, data, abl_common.seed);
      exp.train = make_train_config(abl_train, abl_episode, abl_common.seed);
      exp.eval = EvalSettings{{abl_episode.n_way, abl_episode.k_shot, abl_episode.k_query},
                              abl_eval.episodes,
                              abl_eval.queries,
                              abl_common.seed};
      if (abl_eval.split != "test") exp.split.test = pick_split(data.split, abl_eval.split);
      const auto rows = ablation_run(exp, modes);
      std::ostringstream csv;
      csv::write_ablation_rows(csv, rows);
      write_file(ensure_dir(abl_common.out_dir) / "ablation.csv", csv.str());
      std::cout << csv.str();
      return 0;
    }

    if (*plot_cmd) {
      if (maybe_print_config(plot_cmd)) return 0;
      std::ifstream in(plot_csv);
      if (!in) throw IoError("cannot read " + plot_csv);
      const auto table = csv::read(in);
      const auto svg = plot::render_svg(table, plot::parse_kind(plot_kind));
      write_file(plot_output.empty() ? ensure_dir(plot_common.out_dir) / "plot.svg" : fs::path(plot_output), svg);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
