// im2flow command line: dataset synthesis, training, prediction, evaluation,
// recognition and motion-potential ranking.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "im2flow/classifier.hpp"
#include "im2flow/error.hpp"
#include "im2flow/flow_io.hpp"
#include "im2flow/metrics.hpp"
#include "im2flow/model.hpp"
#include "im2flow/recognition.hpp"
#include "im2flow/synthdata.hpp"
#include "im2flow/training.hpp"

namespace fs = std::filesystem;
using namespace im2flow;
using nlohmann::json;

namespace exit_code {
constexpr int kOk = 0;
constexpr int kConfig = 2;
constexpr int kInput = 3;
constexpr int kNumerical = 4;
constexpr int kVersion = 5;
constexpr int kOther = 1;
}  // namespace exit_code

namespace {

void log(const std::string& msg) { std::cerr << "[im2flow] " << msg << std::endl; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw InputError("cannot write " + path.string());
  }
  void operator()(const json& j) {
    out_ << j.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
  fs::path path_;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw InputError(what + " not found: " + p.string());
}

/// Every subcommand records its fully resolved options next to its outputs;
/// the file can be fed back through --config.
void write_resolved_config(const CLI::App& sub, const fs::path& dir) {
  write_text(dir / (sub.get_name() + ".config.ini"), sub.config_to_str(true, false));
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

std::vector<fs::path> list_images(const fs::path& input) {
  std::vector<fs::path> out;
  if (fs::is_regular_file(input)) {
    out.push_back(input);
  } else if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
  } else {
    throw InputError("input not found: " + input.string());
  }
  if (out.empty()) throw InputError("no .ppm/.pgm images in " + input.string());
  return out;
}

// Options shared by the training subcommands.
struct TrainOptions {
  TrainConfig cfg;
  bool no_flip = false;
  bool no_crop = false;

  void add(CLI::App* sub) {
    sub->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch-size", cfg.batch_size, "Minibatch size")->capture_default_str();
    sub->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    sub->add_option("--beta1", cfg.beta1, "Adam beta1")->capture_default_str();
    sub->add_option("--beta2", cfg.beta2, "Adam beta2")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Seed for shuffling and augmentation")->capture_default_str();
    sub->add_option("--crop-pad", cfg.crop_pad, "Reflect padding before the random crop")->capture_default_str();
    sub->add_flag("--no-flip", no_flip, "Disable horizontal flip augmentation");
    sub->add_flag("--no-crop", no_crop, "Disable crop augmentation");
  }

  TrainConfig resolved() const {
    TrainConfig c = cfg;
    c.flip = c.flip && !no_flip;
    c.crop = c.crop && !no_crop;
    return c;
  }
};

// --- synth -----------------------------------------------------------------

struct SynthCmd {
  DatasetConfig cfg;
  std::string out;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("synth", "Generate the synthetic moving-shapes dataset");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--out", out, "Output dataset directory")->required();
    sub->add_option("--seed", cfg.seed, "Dataset seed")->capture_default_str();
    sub->add_option("--n-train", cfg.n_train, "Training samples")->capture_default_str();
    sub->add_option("--n-val", cfg.n_val, "Validation samples")->capture_default_str();
    sub->add_option("--n-test", cfg.n_test, "Test samples")->capture_default_str();
    sub->add_option("--size", cfg.image_size, "Image side length in pixels")->capture_default_str();
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    cfg.validate();
    ensure_dir(out);
    log("generating " + std::to_string(cfg.n_train + cfg.n_val + cfg.n_test) + " samples");
    const Dataset ds = generate_dataset(cfg);
    write_dataset(ds, out);
    write_resolved_config(sub, out);
    log("dataset written to " + out);
  }
};

// --- train-content ---------------------------------------------------------

struct TrainContentCmd {
  std::string data, out;
  ContentNetConfig cfg;
  TrainOptions train;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("train-content", "Train the content-loss network on ground-truth flows");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--data", data, "Dataset directory")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--base-channels", cfg.net.base_channels, "Channels of the first block")->capture_default_str();
    sub->add_option("--net-seed", cfg.net.seed, "Initialization seed")->capture_default_str();
    train.cfg = cfg.train;
    train.add(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    cfg.train = train.resolved();
    const Dataset ds = read_dataset(data);
    ensure_dir(out);
    write_resolved_config(sub, out);
    JsonLines history(fs::path(out) / "content_history.jsonl");
    ClassifierTrainResult r;
    Classifier phi = train_content_network(ds, cfg, &r, [&](const json& j) {
      history(j);
      log("content epoch " + j["epoch"].dump() + " val_accuracy " + j["val_accuracy"].dump());
    });
    save_classifier(phi, fs::path(out) / "content.ckpt",
                    {{"role", "content"}, {"val_accuracy", r.val_accuracy}, {"best_epoch", r.best_epoch}});
    write_json(fs::path(out) / "content_report.json",
               {{"val_accuracy", r.val_accuracy}, {"best_epoch", r.best_epoch}, {"chance", 1.0 / kNumActionClasses}});
    log("content network val accuracy " + std::to_string(r.val_accuracy));
  }
};

// --- train-im2flow ---------------------------------------------------------

struct TrainIm2FlowCmd {
  std::string data, out, content;
  ModelConfig model;
  LossConfig loss;
  std::string weighting = "magnitude";
  TrainOptions train;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("train-im2flow", "Train the image-to-flow network");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--data", data, "Dataset directory")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--content", content, "Content network checkpoint (required when lambda > 0)");
    sub->add_option("--lambda", loss.lambda, "Content loss weight")->capture_default_str();
    sub->add_option("--content-layer", loss.content_layer, "Content network tap (1-3)")->capture_default_str();
    sub->add_option("--weighting", weighting, "Pixel loss weighting: magnitude or uniform")->capture_default_str();
    sub->add_option("--base-channels", model.base_channels, "Channels after the stem")->capture_default_str();
    sub->add_option("--depth", model.depth, "Number of down/up blocks")->capture_default_str();
    sub->add_option("--dilation-rates", model.dilation_rates, "Bottleneck dilation rates")->capture_default_str();
    sub->add_option("--model-seed", model.seed, "Initialization seed")->capture_default_str();
    train.add(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    loss.weighting = weighting_from_name(weighting);
    loss.validate();
    const TrainConfig tc = train.resolved();
    tc.validate();
    const Dataset ds = read_dataset(data);
    std::optional<Classifier> phi;
    if (loss.lambda > 0.0) {
      if (content.empty()) throw ConfigError("--content is required when --lambda > 0");
      require_file(content, "content network checkpoint");
      phi = load_classifier(content);
    }
    model.input_size = ds.config.image_size;
    ensure_dir(out);
    write_resolved_config(sub, out);
    Im2FlowModel m = make_model_for(model, ds.train);
    log("model parameters " + std::to_string(m.parameter_count()) + ", bottleneck receptive field " +
        std::to_string(bottleneck_receptive_field(model)) + ", m_max " + std::to_string(m.m_max()));
    JsonLines history(fs::path(out) / "history.jsonl");
    const auto ckpt = fs::path(out) / "im2flow.ckpt";
    const TrainResult r = train_im2flow(ds, m, tc, loss, phi ? &*phi : nullptr, [&](const json& j) {
      history(j);
      log("epoch " + j["epoch"].dump() + " val_epe " + j["val"]["epe"].dump() + " (" + j["seconds"].dump() + " s)");
    }, ckpt);
    save_checkpoint(m, ckpt);
    write_json(fs::path(out) / "train_report.json",
               {{"best_epoch", r.best_epoch}, {"best_val_epe", r.best_val_epe}, {"parameters", m.parameter_count()}});
    log("best val EPE " + std::to_string(r.best_val_epe) + " at epoch " + std::to_string(r.best_epoch));
  }
};

// --- predict ---------------------------------------------------------------

struct PredictCmd {
  std::string model, input, out;
  float display = 0.0f;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("predict", "Predict flow for an image or a directory of images");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--model", model, "Im2Flow checkpoint")->required();
    sub->add_option("--input", input, "Image file (.ppm/.pgm) or directory")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--display-max", display, "Magnitude shown fully saturated (0 = model m_max)")
        ->capture_default_str();
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    require_file(model, "model checkpoint");
    const Im2FlowModel m = load_checkpoint(model);
    const auto files = list_images(input);
    ensure_dir(out);
    write_resolved_config(sub, out);
    for (const auto& f : files) {
      const Image im = read_pnm(f);
      if (im.width != m.config().input_size || im.height != m.config().input_size ||
          im.channels != m.config().in_channels)
        throw ConfigError(f.string() + ": expected " + std::to_string(m.config().input_size) + "x" +
                          std::to_string(m.config().input_size) + " with " + std::to_string(m.config().in_channels) +
                          " channels");
      const EncodedFlow enc = tensor_to_encoded(m.infer(image_to_tensor(im))).front();
      const FlowField flow = decode_flow(enc);
      const auto stem = f.stem().string();
      write_flo(flow, fs::path(out) / (stem + ".flo"));
      write_ppm(flow_to_color(flow, display > 0 ? display : m.m_max()), fs::path(out) / (stem + "_color.ppm"));
      write_quantized(quantize(enc, m.m_max()), fs::path(out) / (stem + "_encoded.ppm"));
    }
    log("wrote predictions for " + std::to_string(files.size()) + " images to " + out);
  }
};

// --- evaluate --------------------------------------------------------------

struct EvaluateCmd {
  std::string data, out, model, split = "test";
  std::vector<std::string> predictors{"im2flow", "zero", "nn"};
  std::vector<std::string> masks{"all", "canny", "fg"};
  double eps = kDefaultEvalEpsilon;
  CannyParams canny;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("evaluate", "Score predictors with EPE, DS and OS");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--data", data, "Dataset directory")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--model", model, "Im2Flow checkpoint (for im2flow and nn)");
    sub->add_option("--split", split, "Split to evaluate")->capture_default_str();
    sub->add_option("--predictor", predictors, "Predictors: im2flow, zero, nn, identity")->capture_default_str();
    sub->add_option("--masks", masks, "Masks: all, canny, fg")->capture_default_str();
    sub->add_option("--eval-epsilon", eps, "Static threshold for DS/OS")->capture_default_str();
    sub->add_option("--canny-sigma", canny.sigma, "Canny Gaussian sigma")->capture_default_str();
    sub->add_option("--canny-low", canny.low, "Canny low threshold (fraction of max)")->capture_default_str();
    sub->add_option("--canny-high", canny.high, "Canny high threshold (fraction of max)")->capture_default_str();
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    canny.validate();
    std::vector<MaskSpec> specs;
    for (const auto& m : masks) specs.push_back({mask_kind_from_name(m), canny});
    const Dataset ds = read_dataset(data);
    const auto& samples = ds.split(parse_split(split));
    std::optional<Im2FlowModel> m;
    for (const auto& p : predictors) {
      if (p != "im2flow" && p != "zero" && p != "nn" && p != "identity")
        throw ConfigError("unknown predictor '" + p + "' (expected im2flow, zero, nn or identity)");
      if ((p == "im2flow" || p == "nn") && !m) {
        if (model.empty()) throw ConfigError("--model is required for predictor " + p);
        require_file(model, "model checkpoint");
        m = load_checkpoint(model);
      }
    }
    ensure_dir(out);
    write_resolved_config(sub, out);
    std::vector<MetricsReport> reports;
    json summary;
    for (const auto& p : predictors) {
      FlowPredictor predictor;
      std::vector<FlowField> cache;
      std::map<const SyntheticSample*, std::size_t> slot;
      for (std::size_t i = 0; i < samples.size(); ++i) slot[&samples[i]] = i;
      if (p == "zero") {
        predictor = [](const SyntheticSample& s) { return FlowField(s.frame.width, s.frame.height); };
      } else if (p == "identity") {
        predictor = [](const SyntheticSample& s) { return s.target; };
      } else if (p == "im2flow") {
        std::vector<Image> images;
        for (const auto& s : samples) images.push_back(s.frame);
        for (const auto& e : predict_encoded(*m, images)) cache.push_back(decode_flow(e));
        predictor = [&](const SyntheticSample& s) { return cache.at(slot.at(&s)); };
      } else {
        log("building nearest-neighbour pool from " + std::to_string(ds.train.size()) + " training frames");
        const NearestNeighborBaseline nn_base(*m, ds.train);
        std::vector<Image> images;
        for (const auto& s : samples) images.push_back(s.frame);
        for (const auto& f : bottleneck_feature_rows(*m, images)) cache.push_back(nn_base.query(f));
        predictor = [&](const SyntheticSample& s) { return cache.at(slot.at(&s)); };
      }
      MetricsReport r = evaluate(p, predictor, samples, specs, eps);
      write_json(fs::path(out) / ("metrics_" + p + ".json"), r.to_json());
      summary[p] = r.to_json()["aggregate"];
      reports.push_back(std::move(r));
    }
    const std::string table = format_metrics_table(reports);
    write_text(fs::path(out) / "metrics_table.txt", table);
    write_json(fs::path(out) / "metrics_summary.json", summary);
    std::cout << table;
  }
};

// --- train-streams ---------------------------------------------------------

struct TrainStreamsCmd {
  std::string data, model, out;
  ClassifierConfig net;
  TrainOptions train;
  bool skip_gt = false;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("train-streams", "Train appearance and motion streams and pick the fusion weight");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--data", data, "Dataset directory")->required();
    sub->add_option("--model", model, "Frozen Im2Flow checkpoint for hallucinated flow")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--base-channels", net.base_channels, "Channels of the first block")->capture_default_str();
    sub->add_option("--net-seed", net.seed, "Initialization seed")->capture_default_str();
    sub->add_flag("--skip-gt-stream", skip_gt, "Do not train the ground-truth-flow upper bound stream");
    train.cfg.learning_rate = 1e-3;
    train.cfg.epochs = 6;
    train.cfg.flip = false;
    train.add(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    const TrainConfig tc = train.resolved();
    tc.validate();
    require_file(model, "model checkpoint");
    const Im2FlowModel m = load_checkpoint(model);
    const Dataset ds = read_dataset(data);
    ensure_dir(out);
    write_resolved_config(sub, out);
    const auto ytr = sample_labels(ds.train), yva = sample_labels(ds.val);
    json report;
    auto train_one = [&](StreamKind kind, const std::string& name, const Tensor& xtr, const Tensor& xva) {
      JsonLines history(fs::path(out) / (name + "_history.jsonl"));
      StreamClassifier s = train_stream(kind, xtr, ytr, xva, yva, net, tc, [&](const json& j) {
        history(j);
        log(name + " epoch " + j["epoch"].dump() + " val_accuracy " + j["val_accuracy"].dump());
      });
      save_classifier(s.net, fs::path(out) / (name + ".ckpt"), {{"role", name}, {"val_accuracy", s.val_accuracy}});
      report["streams"][name] = {{"val_accuracy", s.val_accuracy}};
      return s;
    };
    const Tensor app_va = appearance_inputs(ds.val);
    const Tensor mot_va = motion_inputs(ds.val, MotionSource::Hallucinated, &m);
    auto app = train_one(StreamKind::Appearance, "appearance", appearance_inputs(ds.train), app_va);
    auto mot = train_one(StreamKind::Motion, "motion", motion_inputs(ds.train, MotionSource::Hallucinated, &m), mot_va);
    if (!skip_gt)
      train_one(StreamKind::Motion, "motion_gt", motion_inputs(ds.train, MotionSource::GroundTruth, nullptr),
                motion_inputs(ds.val, MotionSource::GroundTruth, nullptr));
    const auto sel = select_fusion_weight(stream_probabilities(app.net, app_va), stream_probabilities(mot.net, mot_va), yva);
    report["fusion"] = {{"weight", sel.weight},
                        {"val_accuracy", sel.accuracy},
                        {"grid", sel.grid},
                        {"grid_accuracy", sel.grid_accuracy}};
    report["model"] = fs::absolute(model).string();
    write_json(fs::path(out) / "fusion.json", report);
    log("fusion weight " + std::to_string(sel.weight) + " (val accuracy " + std::to_string(sel.accuracy) + ")");
  }
};

// --- recognize -------------------------------------------------------------

struct RecognizeCmd {
  std::string streams, model, data, input, out, split = "test";
  double weight = -1.0;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("recognize", "Classify images with the fused two-stream model");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--streams", streams, "Directory written by train-streams")->required();
    sub->add_option("--model", model, "Im2Flow checkpoint used to hallucinate flow")->required();
    sub->add_option("--data", data, "Labelled dataset directory");
    sub->add_option("--split", split, "Split of --data to classify")->capture_default_str();
    sub->add_option("--input", input, "Unlabelled image file or directory (instead of --data)");
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--weight", weight, "Fusion weight override (default: the selected weight)")
        ->capture_default_str();
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    if (data.empty() == input.empty()) throw ConfigError("give exactly one of --data or --input");
    const fs::path sdir(streams);
    for (const char* f : {"appearance.ckpt", "motion.ckpt", "fusion.json"}) require_file(sdir / f, "stream artifact");
    require_file(model, "model checkpoint");
    const Classifier app = load_classifier(sdir / "appearance.ckpt");
    const Classifier mot = load_classifier(sdir / "motion.ckpt");
    const json fusion = read_json(sdir / "fusion.json");
    double w = weight;
    if (w < 0.0) {
      if (!fusion.contains("fusion") || !fusion["fusion"].contains("weight"))
        throw InputError("fusion.json has no fusion.weight entry");
      w = fusion["fusion"]["weight"].get<double>();
    }
    const Im2FlowModel m = load_checkpoint(model);

    std::vector<std::string> ids;
    std::vector<SyntheticSample> samples;
    if (!data.empty()) {
      const Dataset ds = read_dataset(data);
      samples = ds.split(parse_split(split));
    } else {
      for (const auto& f : list_images(input)) {
        SyntheticSample s;
        s.id = f.stem().string();
        s.frame = read_pnm(f);
        samples.push_back(std::move(s));
      }
    }
    for (const auto& s : samples) ids.push_back(s.id);
    ensure_dir(out);
    write_resolved_config(sub, out);
    const auto p_app = stream_probabilities(app, appearance_inputs(samples));
    const auto p_mot = stream_probabilities(mot, motion_inputs(samples, MotionSource::Hallucinated, &m));
    const auto fused = fused_predictions(p_app, p_mot, w);
    std::vector<int> pred_app, pred_mot;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      pred_app.push_back(argmax(p_app[i]));
      pred_mot.push_back(argmax(p_mot[i]));
    }
    std::optional<std::vector<int>> pred_gt;
    if (!data.empty() && fs::exists(sdir / "motion_gt.ckpt")) {
      const Classifier gt = load_classifier(sdir / "motion_gt.ckpt");
      pred_gt.emplace();
      for (const auto& row : stream_probabilities(gt, motion_inputs(samples, MotionSource::GroundTruth, nullptr)))
        pred_gt->push_back(argmax(row));
    }
    JsonLines preds(fs::path(out) / "predictions.jsonl");
    auto name = [](int k) { return std::string(action_name(static_cast<ActionClass>(k))); };
    for (std::size_t i = 0; i < samples.size(); ++i) {
      json r{{"id", ids[i]}, {"appearance", name(pred_app[i])}, {"motion", name(pred_mot[i])}, {"fused", name(fused[i])}};
      if (!data.empty()) r["label"] = name(static_cast<int>(samples[i].label));
      preds(r);
    }
    json report{{"fusion_weight", w}, {"count", samples.size()}};
    if (!data.empty()) {
      const auto labels = sample_labels(samples);
      auto block = [&](const std::vector<int>& p) {
        const auto pa = pair_accuracy(p, labels);
        json pairs = json::array();
        for (double a : pa) pairs.push_back(std::isfinite(a) ? json(a) : json(nullptr));
        return json{{"accuracy", accuracy(p, labels)}, {"pair_accuracy", pairs}};
      };
      report["appearance"] = block(pred_app);
      report["motion"] = block(pred_mot);
      report["fused"] = block(fused);
      if (pred_gt) report["motion_gt"] = block(*pred_gt);
      write_json(fs::path(out) / "confusion.json",
                 {{"appearance", ConfusionMatrix::build(pred_app, labels, kNumActionClasses).to_json()},
                  {"motion", ConfusionMatrix::build(pred_mot, labels, kNumActionClasses).to_json()},
                  {"fused", ConfusionMatrix::build(fused, labels, kNumActionClasses).to_json()}});
      std::printf("appearance %.4f  motion %.4f  fused %.4f (w=%.2f)\n", report["appearance"]["accuracy"].get<double>(),
                  report["motion"]["accuracy"].get<double>(), report["fused"]["accuracy"].get<double>(), w);
    }
    write_json(fs::path(out) / "recognition_report.json", report);
  }
};

// --- rank-motion -----------------------------------------------------------

struct RankMotionCmd {
  std::string model, data, input, out, split = "test";

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("rank-motion", "Rank images by predicted motion potential");
    sub->set_config("--config", "", "Read options from an INI/TOML file");
    sub->add_option("--model", model, "Im2Flow checkpoint")->required();
    sub->add_option("--data", data, "Dataset directory (foreground masks are used)");
    sub->add_option("--split", split, "Split of --data to rank")->capture_default_str();
    sub->add_option("--input", input, "Image file or directory (whole-image masks)");
    sub->add_option("--out", out, "Output directory")->required();
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    if (data.empty() == input.empty()) throw ConfigError("give exactly one of --data or --input");
    require_file(model, "model checkpoint");
    const Im2FlowModel m = load_checkpoint(model);
    std::vector<std::string> ids;
    std::vector<Image> images;
    std::vector<Mask> masks;
    if (!data.empty()) {
      const Dataset ds = read_dataset(data);
      for (const auto& s : ds.split(parse_split(split))) {
        ids.push_back(s.id);
        images.push_back(s.frame);
        masks.push_back(s.mask);
      }
    } else {
      for (const auto& f : list_images(input)) {
        ids.push_back(f.stem().string());
        images.push_back(read_pnm(f));
      }
    }
    ensure_dir(out);
    write_resolved_config(sub, out);
    const auto ranked = rank_by_motion_potential(images, m, masks);
    JsonLines lines(fs::path(out) / "ranking.jsonl");
    for (std::size_t r = 0; r < ranked.size(); ++r)
      lines({{"rank", r + 1}, {"id", ids[ranked[r].index]}, {"score", ranked[r].score}});
    log("ranked " + std::to_string(ranked.size()) + " images");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"im2flow: motion hallucination from static images"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  SynthCmd synth;
  TrainContentCmd train_content;
  TrainIm2FlowCmd train_im2flow;
  PredictCmd predict;
  EvaluateCmd evaluate_cmd;
  TrainStreamsCmd train_streams;
  RecognizeCmd recognize;
  RankMotionCmd rank_motion;
  synth.add(app);
  train_content.add(app);
  train_im2flow.add(app);
  predict.add(app);
  evaluate_cmd.add(app);
  train_streams.add(app);
  recognize.add(app);
  rank_motion.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code::kConfig;
  } catch (const VersionError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code::kVersion;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code::kInput;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code::kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code::kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code::kOther;
  }
  return exit_code::kOk;
}
