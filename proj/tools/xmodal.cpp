// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: synthetic data generation, training, evaluation,
// MELD schema validation, and the finite-difference gradient self-check.
// Exit codes: 0 success, 1 validation error, 2 runtime/numeric failure.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "xmodal/checkpoint.hpp"
#include "xmodal/config_json.hpp"
#include "xmodal/gradcheck.hpp"
#include "xmodal/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GenerateArgs {
  std::string out;
  xmodal::SyntheticConfig synth;
  std::vector<double> priors;  // staging for the --priors flag
};

struct TrainArgs {
  std::string data;
  std::string out;
  xmodal::ModelConfig model;
  xmodal::TrainConfig train;
  std::string fusion = "cross-attention";
  std::string encoder = "file-backed";
  std::string class_weights = "inverse-frequency";
  std::size_t encoder_depth = 2;
  std::size_t encoder_heads = 2;
  std::size_t dim = 0;        // 0: take the dataset feature dim
  std::size_t text_len = 0;   // 0: take the dataset maximum
  std::size_t audio_len = 0;  // 0: take the dataset maximum
  // Explicit flags beat config-file values, which beat dataset-derived ones.
  bool fusion_given = false;
  bool encoder_given = false;
  bool class_weights_given = false;
  bool encoder_depth_given = false;
  bool encoder_heads_given = false;
  bool file_has_model_dim = false;
};

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
};

struct ValidateArgs {
  std::string data;
  bool strict = false;
};

struct GradcheckArgs {
  std::uint64_t seed = 1234;
};

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw xmodal::ValueError("cannot write " + path.string());
  out << text;
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw xmodal::ValueError("cannot read config file " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw xmodal::ValueError("config file " + path.string() + ": " + e.what());
  }
}

// The resolved configuration is echoed before any work starts, so every run
// is reproducible from its output directory alone.
void echo_config(const fs::path& out_dir, const json& resolved) {
  fs::create_directories(out_dir);
  write_text_file(out_dir / "config.json", resolved.dump(2) + "\n");
}

int run_generate(const GenerateArgs& args) {
  xmodal::SyntheticConfig cfg = args.synth;
  if (!args.priors.empty()) {
    if (args.priors.size() != xmodal::kNumEmotions)
      throw xmodal::ValueError("--priors needs exactly 7 comma-separated values, got " +
                               std::to_string(args.priors.size()));
    double sum = 0;
    for (std::size_t i = 0; i < xmodal::kNumEmotions; ++i) {
      cfg.class_priors[i] = args.priors[i];
      sum += args.priors[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw xmodal::ValueError("--priors must sum to 1, got " + std::to_string(sum));
  }

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  json provenance;
  provenance["format"] = "xmodal-synthetic-v1";
  provenance["config"] = cfg;
  write_text_file(out_dir / "provenance.json", provenance.dump(2) + "\n");

  auto data = xmodal::generate_synthetic(cfg);
  xmodal::write_dataset(data.train, out_dir / "train");
  xmodal::write_dataset(data.validation, out_dir / "validation");
  xmodal::write_dataset(data.test, out_dir / "test");

  std::cout << "wrote " << data.train.records.size() << "/" << data.validation.records.size() << "/"
            << data.test.records.size() << " train/validation/test records to " << out_dir.string()
            << "\n";
  return 0;
}

int run_train(const TrainArgs& args) {
  const fs::path data_dir(args.data);
  auto train_split = xmodal::read_dataset(data_dir / "train");
  auto val_split = xmodal::read_dataset(data_dir / "validation");

  xmodal::ModelConfig mcfg = args.model;  // defaults merged with the config file
  if (args.fusion_given) {
    const auto fusion = xmodal::parse_fusion_kind(args.fusion);
    if (!fusion) throw xmodal::ValueError("--fusion must be 'concat' or 'cross-attention'");
    mcfg.fusion = *fusion;
  }

  if (args.dim > 0)
    mcfg.model_dim = args.dim;
  else if (!args.file_has_model_dim)
    mcfg.model_dim = train_split.feature_dim;
  if (args.text_len > 0)
    mcfg.text_len = args.text_len;
  else if (mcfg.text_len == 0)
    mcfg.text_len = train_split.text_len_max;
  if (args.audio_len > 0)
    mcfg.audio_len = args.audio_len;
  else if (mcfg.audio_len == 0)
    mcfg.audio_len = train_split.audio_len_max;

  if (args.encoder_given) {
    xmodal::EncoderKind kind;
    if (args.encoder == "file-backed")
      kind = xmodal::EncoderKind::FileBacked;
    else if (args.encoder == "toy-transformer")
      kind = xmodal::EncoderKind::ToyTransformer;
    else
      throw xmodal::ValueError("--encoder must be 'file-backed' or 'toy-transformer'");
    mcfg.text_encoder.kind = kind;
    mcfg.audio_encoder.kind = kind;
  }
  for (auto* enc : {&mcfg.text_encoder, &mcfg.audio_encoder}) {
    if (args.encoder_depth_given) enc->depth = args.encoder_depth;
    if (args.encoder_heads_given) enc->num_heads = args.encoder_heads;
    enc->model_dim = mcfg.model_dim;
    enc->max_seq_len = std::max({train_split.text_len_max, train_split.audio_len_max,
                                 mcfg.text_len, mcfg.audio_len});
    if (enc->kind == xmodal::EncoderKind::FileBacked) {
      if (mcfg.model_dim != train_split.feature_dim)
        throw xmodal::ValueError("file-backed encoders pass stored features through: --dim " +
                                 std::to_string(mcfg.model_dim) +
                                 " conflicts with dataset feature dim " +
                                 std::to_string(train_split.feature_dim));
    } else if (enc->input_dim == 0) {
      enc->input_dim = train_split.feature_dim;
    }
  }

  xmodal::TrainConfig tcfg = args.train;
  if (args.class_weights_given) {
    const auto mode = xmodal::parse_class_weight_mode(args.class_weights);
    if (!mode) throw xmodal::ValueError("--class-weights must be 'uniform' or 'inverse-frequency'");
    tcfg.class_weight_mode = *mode;
  }

  mcfg.validate();
  tcfg.validate();

  const fs::path out_dir(args.out);
  json resolved;
  resolved["command"] = "train";
  resolved["data"] = args.data;
  resolved["model"] = mcfg;
  resolved["train"] = tcfg;
  echo_config(out_dir, resolved);

  xmodal::Rng master(tcfg.seed);
  xmodal::Rng init = master.derive(xmodal::RngStream::Init);
  xmodal::BimodalClassifier model(mcfg, init);

  std::ofstream history_log(out_dir / "history.jsonl", std::ios::trunc);
  const auto start = std::chrono::steady_clock::now();
  auto history = xmodal::train_loop(
      model, train_split, val_split, tcfg, [&](const xmodal::EvalRecord& rec) {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        history_log << xmodal::history_record_json(rec, wall) << "\n";
        history_log.flush();
        std::cout << "epoch " << rec.epoch << "  train loss " << rec.train_loss
                  << "  val weighted F1 " << rec.val_weighted_f1 << "\n";
      });

  xmodal::save_checkpoint(out_dir, model);
  if (!history.entries.empty()) {
    const auto& best = history.entries[history.best_index];
    std::cout << "best: epoch " << best.epoch << ", val weighted F1 " << best.val_weighted_f1
              << "; checkpoint written to " << (out_dir / "checkpoint.json").string() << "\n";
  }
  return 0;
}

int run_evaluate(const EvaluateArgs& args) {
  fs::path ckpt(args.checkpoint);
  xmodal::BimodalClassifier model = ckpt.extension() == ".json"
                                        ? xmodal::load_checkpoint(ckpt, fs::path(ckpt).replace_extension(".bin"))
                                        : xmodal::load_checkpoint(ckpt);

  if (args.split != "train" && args.split != "validation" && args.split != "test")
    throw xmodal::ValueError("--split must be train, validation or test");
  auto split = xmodal::read_dataset(fs::path(args.data) / args.split);

  if (split.feature_dim != model.config().text_encoder.effective_input_dim() &&
      split.feature_dim != model.config().model_dim)
    throw xmodal::ValueError("checkpoint expects feature dim " +
                             std::to_string(model.config().model_dim) + " but the dataset provides " +
                             std::to_string(split.feature_dim));

  const auto report = xmodal::evaluate_split(model, split);
  const auto table = xmodal::render_report_table(report);
  std::cout << table;

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "report.txt", table);
  write_text_file(out_dir / "report.json", xmodal::report_to_json(report));
  write_text_file(out_dir / "confusion.csv", xmodal::confusion_csv(report.confusion));
  return 0;
}

int run_validate(const ValidateArgs& args) {
  const fs::path data_dir(args.data);
  auto train = xmodal::read_dataset(data_dir / "train");
  auto val = xmodal::read_dataset(data_dir / "validation");
  auto test = xmodal::read_dataset(data_dir / "test");
  const auto report = xmodal::validate_meld_schema(train, val, test);
  if (report.ok()) {
    std::cout << "schema OK: " << train.records.size() << "/" << val.records.size() << "/"
              << test.records.size() << " records\n";
    return 0;
  }
  for (const auto& v : report.violations) std::cout << "violation: " << v << "\n";
  return args.strict ? 1 : 0;
}

int run_gradcheck(const GradcheckArgs& args) {
  const auto results = xmodal::run_gradcheck_suite(args.seed);
  std::cout << xmodal::format_gradcheck_report(results);
  double worst = 0;
  bool ok = true;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_err);
    ok = ok && r.pass();
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (worst " << worst << ")\n";
  return ok ? 0 : 2;
}

// --config is applied before flag parsing, so explicit flags win.
std::string prescan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  GenerateArgs gen;
  TrainArgs train;
  EvaluateArgs eval;
  ValidateArgs validate;
  GradcheckArgs gradcheck;
  std::string config_path_display;  // registered so --config shows in help

  try {
    const std::string config_path = prescan_config_path(argc, argv);
    if (!config_path.empty()) {
      const json j = load_json_file(config_path);
      if (j.contains("generate")) xmodal::from_json(j.at("generate"), gen.synth);
      if (j.contains("model")) {
        xmodal::from_json(j.at("model"), train.model);
        train.file_has_model_dim = j.at("model").contains("model_dim");
      }
      if (j.contains("train")) xmodal::from_json(j.at("train"), train.train);
    }

    CLI::App app{"xmodal: bimodal (text+audio) emotion classifier with concatenation and "
                 "cross-attention fusion"};
    app.require_subcommand(1);

    auto* g = app.add_subcommand("generate", "Generate a synthetic bimodal dataset");
    g->add_option("--out", gen.out, "Output dataset directory")->required();
    g->add_option("--seed", gen.synth.seed, "Master seed (all randomness derives from it)")
        ->capture_default_str();
    g->add_option("--n-train", gen.synth.n_train, "Training records")->capture_default_str();
    g->add_option("--n-val", gen.synth.n_validation, "Validation records")->capture_default_str();
    g->add_option("--n-test", gen.synth.n_test, "Test records")->capture_default_str();
    g->add_option("--dim", gen.synth.feature_dim, "Feature dimension")->capture_default_str();
    g->add_option("--text-len", gen.synth.text_len, "Text sequence length")->capture_default_str();
    g->add_option("--audio-len", gen.synth.audio_len, "Audio sequence length")->capture_default_str();
    g->add_option("--priors", gen.priors, "Seven comma-separated class priors (must sum to 1)")
        ->delimiter(',');
    g->add_option("--interaction-strength", gen.synth.interaction_strength,
                  "Fraction of samples whose label is recoverable only from the modality pair")
        ->capture_default_str();
    g->add_option("--noise", gen.synth.noise_scale, "Per-element Gaussian noise scale")
        ->capture_default_str();
    g->add_option("--prototype-scale", gen.synth.prototype_scale, "Class prototype scale")
        ->capture_default_str();
    g->add_option("--config", config_path_display, "JSON config file (flags override it)");

    auto* t = app.add_subcommand("train", "Train a classifier on a dataset directory");
    t->add_option("--data", train.data, "Dataset directory (train/ validation/ test/)")->required();
    t->add_option("--out", train.out, "Output directory for checkpoint, history and config")
        ->required();
    t->add_option("--fusion", train.fusion, "Fusion architecture: concat | cross-attention")
        ->capture_default_str();
    t->add_option("--heads", train.model.num_heads, "Attention heads in both fusion layers")
        ->capture_default_str();
    t->add_option("--dim", train.dim, "Model dimension (default: dataset feature dim)");
    t->add_option("--text-len", train.text_len, "Padded text length (default: dataset max)");
    t->add_option("--audio-len", train.audio_len, "Padded audio length (default: dataset max)");
    t->add_option("--dropout", train.model.dropout_p, "Dropout rate in the classification head")
        ->capture_default_str();
    t->add_option("--hidden-head-dim", train.model.hidden_head_dim,
                  "Insert a hidden linear layer of this width before the classification layer")
        ->capture_default_str();
    t->add_option("--mask-padding", train.model.mask_padding,
                  "Mask cross-attention keys beyond the text length")
        ->capture_default_str();
    t->add_option("--encoder", train.encoder, "Encoder backend: file-backed | toy-transformer")
        ->capture_default_str();
    t->add_option("--encoder-depth", train.encoder_depth, "Toy encoder blocks")->capture_default_str();
    t->add_option("--encoder-heads", train.encoder_heads, "Toy encoder attention heads")
        ->capture_default_str();
    t->add_option("--train-encoders", train.model.train_encoders,
                  "Update encoder parameters during multimodal training")
        ->capture_default_str();
    t->add_option("--lr", train.train.learning_rate,
                  "AdamW learning rate (multimodal default 5e-8; unimodal encoder runs use 5e-6)")
        ->capture_default_str();
    t->add_option("--batch-size", train.train.batch_size, "Samples per optimizer step")
        ->capture_default_str();
    t->add_option("--patience", train.train.patience,
                  "Evaluations without a new best before early stop")
        ->capture_default_str();
    t->add_option("--max-epochs", train.train.max_epochs, "Epoch budget")->capture_default_str();
    t->add_option("--eval-every", train.train.eval_every, "Epochs between validation evaluations")
        ->capture_default_str();
    t->add_option("--class-weights", train.class_weights,
                  "Loss weighting: uniform | inverse-frequency")
        ->capture_default_str();
    t->add_option("--seed", train.train.seed, "Master seed (init, dropout, shuffling)")
        ->capture_default_str();
    t->add_option("--weight-decay", train.train.weight_decay, "AdamW decoupled weight decay")
        ->capture_default_str();
    t->add_option("--config", config_path_display, "JSON config file (flags override it)");

    auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
    e->add_option("--checkpoint", eval.checkpoint,
                  "Checkpoint directory or path to checkpoint.json")
        ->required();
    e->add_option("--data", eval.data, "Dataset directory")->required();
    e->add_option("--split", eval.split, "Split to score: train | validation | test")
        ->capture_default_str();
    e->add_option("--out", eval.out, "Output directory for report.txt/report.json/confusion.csv")
        ->required();

    auto* v = app.add_subcommand("validate", "Check a dataset against the MELD split schema");
    v->add_option("--data", validate.data, "Dataset directory")->required();
    v->add_flag("--strict", validate.strict, "Exit nonzero on any violation");

    auto* gc = app.add_subcommand("gradcheck",
                                  "Finite-difference check of every layer and both architectures");
    gc->add_option("--seed", gradcheck.seed, "Seed for the random test inputs")
        ->capture_default_str();

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
      const int code = app.exit(err);
      return code == 0 ? 0 : 1;
    }

    if (g->parsed()) return run_generate(gen);
    if (t->parsed()) {
      train.fusion_given = t->count("--fusion") > 0;
      train.encoder_given = t->count("--encoder") > 0;
      train.class_weights_given = t->count("--class-weights") > 0;
      train.encoder_depth_given = t->count("--encoder-depth") > 0;
      train.encoder_heads_given = t->count("--encoder-heads") > 0;
      return run_train(train);
    }
    if (e->parsed()) return run_evaluate(eval);
    if (v->parsed()) return run_validate(validate);
    if (gc->parsed()) return run_gradcheck(gradcheck);
    return 1;
  } catch (const xmodal::ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const xmodal::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
}
