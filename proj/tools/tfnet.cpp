#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tfnet/config.hpp"
#include "tfnet/data.hpp"
#include "tfnet/dct.hpp"
#include "tfnet/error.hpp"
#include "tfnet/kernels.hpp"
#include "tfnet/log.hpp"
#include "tfnet/metrics.hpp"
#include "tfnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace tfnet;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumerical = 4 };

int fail(int code, const std::string& message) {
  std::cerr << "ERROR " << code << ": " << message << '\n';
  return code;
}

SynthSpec read_synth_spec(const std::string& arg) {
  nlohmann::json doc;
  if (!arg.empty() && arg.front() == '{') {
    doc = nlohmann::json::parse(arg, nullptr, false);
  } else {
    std::ifstream in(arg);
    if (!in) throw ConfigError("cannot open synthetic spec " + arg);
    doc = nlohmann::json::parse(in, nullptr, false);
  }
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("synthetic spec is not a JSON object");
  SynthSpec s;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    auto count = [&]() {
      if (!v.is_number_unsigned()) throw ConfigError("synthetic spec key '" + k + "' must be a non-negative integer");
      return v.get<std::size_t>();
    };
    if (k == "classes") s.num_classes = count();
    else if (k == "clips_per_class") s.clips_per_class = count();
    else if (k == "image_size") s.image_size = count();
    else if (k == "frames") s.frames = count();
    else if (k == "split" && v.is_string()) s.split = v.get<std::string>();
    else throw ConfigError("unknown synthetic spec key '" + k + "'");
  }
  return s;
}

std::vector<std::size_t> parse_values(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) throw ConfigError("bad channel count '" + tok + "' in --values");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--values is empty");
  return out;
}

void echo_config(const RunConfig& cfg) { log(LogLevel::Info, "config " + to_json(cfg).dump()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TFNet toolkit: DCT export, synthetic data, training, evaluation, saliency and lambda sweeps"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads for parallel kernels (1 gives bit-reproducible runs)")
      ->check(CLI::PositiveNumber);

  auto* dct = app.add_subcommand("dct-export", "Write the DCT frequency volume of an image");
  std::string image, out;
  double lambda = 1.0;
  dct->add_option("--image", image, "Input .png or .ppm")->required();
  dct->add_option("--lambda", lambda, "Channel ratio in [0, 1]")->required();
  dct->add_option("--out", out, "Output DCTT file")->required();

  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic moving-shapes dataset");
  std::string spec_arg;
  std::uint64_t seed = 0;
  synth->add_option("--spec", spec_arg, "JSON file or inline JSON with classes, clips_per_class, image_size, frames")
      ->required();
  synth->add_option("--seed", seed, "Generator seed")->required();
  synth->add_option("--out", out, "Dataset root")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string config_path, data, log_path, split = "train";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> train_seed;
  train_cmd->add_option("--config", config_path, "JSON config file")->required();
  train_cmd->add_option("--data", data, "Dataset root")->required();
  train_cmd->add_option("--out", out, "Checkpoint path")->required();
  train_cmd->add_option("--set", overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--seed", train_seed, "Overrides train.seed");
  train_cmd->add_option("--log", log_path, "Metrics log (default: <out>.log)");
  train_cmd->add_option("--split", split, "Dataset split");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a detection dump");
  std::string ckpt, dets_path, report_path, dump_path;
  double iou_threshold = 0.5;
  auto* ckpt_opt = eval_cmd->add_option("--ckpt", ckpt, "Checkpoint");
  auto* dets_opt = eval_cmd->add_option("--dets", dets_path, "Detection dump scored against every labelled frame");
  ckpt_opt->excludes(dets_opt);
  eval_cmd->add_option("--data", data, "Dataset root")->required();
  eval_cmd->add_option("--iou", iou_threshold, "IoU match threshold");
  eval_cmd->add_option("--report", report_path, "Per-class AP table output")->required();
  eval_cmd->add_option("--dump", dump_path, "Write the detections used");
  eval_cmd->add_option("--split", split, "Dataset split");

  auto* sal = app.add_subcommand("saliency", "Guided-backpropagation saliency maps for one clip");
  std::string clip_dir, format = "png";
  std::size_t start = 0;
  sal->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sal->add_option("--clip", clip_dir, "Directory of frame_*.png")->required();
  sal->add_option("--out", out, "Output directory")->required();
  sal->add_option("--start", start, "First frame index");
  sal->add_option("--format", format, "png or pgm")->check(CLI::IsMember({"png", "pgm"}));

  auto* sweep = app.add_subcommand("sweep-lambda", "Train and evaluate once per DCT channel count");
  std::string values = "1,8,32,64";
  sweep->add_option("--config", config_path, "JSON config file")->required();
  sweep->add_option("--data", data, "Dataset root")->required();
  sweep->add_option("--values", values, "Per-component channel counts, comma separated");
  sweep->add_option("--set", overrides, "Config override key=value (repeatable)");
  sweep->add_option("--out", out, "Also write the table here");
  sweep->add_option("--split", split, "Dataset split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR " << kUsage << ": " << e.what() << '\n';
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kUsage;
  }

  try {
    log_level();
    if (threads > 0) kernels::set_num_threads(threads);

    if (*dct) {
      const FrequencyVolume vol = dct_frontend(read_image(image), lambda);
      write_dctt(out, vol);
      log(LogLevel::Info, "wrote " + out + " (" + std::to_string(vol.channels()) + " channels)");
    } else if (*synth) {
      synth_dataset(read_synth_spec(spec_arg), seed, out);
      log(LogLevel::Info, "wrote synthetic dataset to " + out);
    } else if (*train_cmd) {
      if (train_seed) overrides.push_back("train.seed=" + std::to_string(*train_seed));
      const RunConfig cfg = load_config(config_path, overrides);
      echo_config(cfg);
      const DatasetIndex index = build_index(data, split);
      TFNetModel model(model_spec(cfg, index.class_names.size()));
      model.initialize(cfg.train.seed);
      std::ofstream log_file(log_path.empty() ? out + ".log" : log_path);
      if (!log_file) throw DataError("cannot write the metrics log");
      TrainOptions opts;
      opts.checkpoint = out;
      opts.log = &log_file;
      opts.class_names = index.class_names;
      const TrainResult r = train(index, cfg, model, opts);
      log(LogLevel::Info, "trained " + std::to_string(r.iterations) + " iterations, final loss " +
                              (r.losses.empty() ? std::string("n/a") : format_exact(r.losses.back())));
    } else if (*eval_cmd) {
      if (ckpt.empty() == dets_path.empty()) throw CLI::RequiredError("exactly one of --ckpt or --dets");
      const DatasetIndex index = build_index(data, split);
      std::vector<Detection> detections;
      std::vector<GroundTruthFrame> gts;
      std::vector<std::string> names = index.class_names;
      std::size_t num_classes = index.class_names.size();
      if (!ckpt.empty()) {
        LoadedModel lm = load_model(ckpt);
        lm.config.eval.iou = iou_threshold;
        echo_config(lm.config);
        num_classes = lm.model->spec().num_classes;
        if (names.size() != num_classes) throw DataError("dataset and checkpoint disagree on the class count");
        Evaluation ev = evaluate(*lm.model, index, lm.config);
        detections = std::move(ev.detections);
        gts = std::move(ev.ground_truth);
      } else {
        std::ifstream in(dets_path);
        if (!in) throw DataError("cannot open " + dets_path);
        detections = read_detections(in);
        gts = all_ground_truth(index);
      }
      const EvalReport report = frame_map(detections, gts, num_classes, iou_threshold);
      std::ofstream rep(report_path);
      if (!rep) throw DataError("cannot write " + report_path);
      write_ap_table(rep, report, names);
      write_ap_table(std::cout, report, names);
      if (!dump_path.empty()) {
        std::ofstream d(dump_path);
        write_detections(d, detections);
      }
    } else if (*sal) {
      LoadedModel lm = load_model(ckpt);
      const ClipSample clip = load_clip(fs::path(clip_dir), start, 1, lm.config.input.clip_options());
      const SaliencyResult r = guided_backprop(*lm.model, lm.config, clip);
      write_saliency(r, out, format);
      log(LogLevel::Info, std::string("saliency target ") + (r.fallback ? "max logit" : "top detection") +
                              ", class " + std::to_string(r.target.class_id));
    } else if (*sweep) {
      const auto counts = parse_values(values);
      const DatasetIndex index = build_index(data, split);
      std::ostringstream table;
      table << "channels cls-accuracy localization\n";
      for (std::size_t c : counts) {
        auto ov = overrides;
        ov.push_back("model.dct_channels=" + std::to_string(c));
        ov.push_back("model.time_only=false");
        const RunConfig cfg = load_config(config_path, ov);
        echo_config(cfg);
        TFNetModel model(model_spec(cfg, index.class_names.size()));
        model.initialize(cfg.train.seed);
        train(index, cfg, model, TrainOptions{});
        const Evaluation ev = evaluate(model, index, cfg);
        table << c << ' ' << format_exact(ev.report.cls_accuracy) << ' ' << format_exact(ev.localization) << '\n';
        log(LogLevel::Info, "channels " + std::to_string(c) + " done");
      }
      std::cout << table.str();
      if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw DataError("cannot write " + out);
        f << table.str();
      }
    }
  } catch (const CLI::Error& e) {
    return fail(kUsage, e.what());
  } catch (const NumericalError& e) {
    return fail(kNumerical, e.what());
  } catch (const Error& e) {
    return fail(kData, e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, e.what());
  }
  return kOk;
}
