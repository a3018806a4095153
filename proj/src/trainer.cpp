#include "tfnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <sstream>

#include "tfnet/error.hpp"
#include "tfnet/log.hpp"

namespace tfnet {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t below(std::mt19937_64& rng, std::size_t n) {
  return std::min(static_cast<std::size_t>(unit(rng) * static_cast<double>(n)), n - 1);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(sq);
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  auto rng = stream(seed, epoch, 0, 1);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[below(rng, i)]);
  return p;
}

// One model-ready training item.
struct Item {
  Tensor frequency;
  Tensor clip;
  GroundTruthFrame gt;
};

Item make_item(const ClipSample& clip, const ModelSpec& spec) {
  const ModelInput in = prepare_inputs(std::span<const ClipSample>(&clip, 1), spec);
  return {spec.time_only ? Tensor() : in.frequency.item(0), in.clip.item(0), clip.gt};
}

std::string format_log(std::size_t iter, double loss, double lr) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu %.9g %.9g", iter, loss, lr);
  return buf;
}

void set_guided(TFNetModel& model, bool guided) {
  model.visit([guided](nn::Layer& l) {
    if (auto* a = dynamic_cast<nn::Activation*>(&l)) a->set_guided(guided);
  });
}

}  // namespace

double lr_schedule(std::size_t iteration, const TrainConfig& cfg) {
  if (cfg.halving_interval == 0) throw ConfigError("halving interval must be positive");
  return cfg.lr * std::pow(0.5, static_cast<double>(iteration / cfg.halving_interval));
}

TrainState make_train_state(std::vector<nn::Parameter*> parameters) {
  TrainState s;
  s.parameters = std::move(parameters);
  for (const auto* p : s.parameters) s.velocity.emplace_back(p->value.shape());
  return s;
}

void sgd_step(TrainState& state, std::span<const Tensor> gradients, double lr, double momentum) {
  if (gradients.size() != state.parameters.size() || state.velocity.size() != state.parameters.size()) {
    throw ShapeError("sgd_step: " + std::to_string(gradients.size()) + " gradients for " +
                     std::to_string(state.parameters.size()) + " parameters");
  }
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    Tensor& p = state.parameters[i]->value;
    Tensor& v = state.velocity[i];
    const Tensor& g = gradients[i];
    if (g.shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("sgd_step: gradient " + shape_string(g.shape()) + " does not match parameter " +
                       state.parameters[i]->name + " " + shape_string(p.shape()));
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] + g[k];
      p[k] -= lr * v[k];
    }
  }
  ++state.iteration;
}

void sgd_step(TrainState& state, double lr, double momentum) {
  std::vector<Tensor> grads;
  grads.reserve(state.parameters.size());
  for (const auto* p : state.parameters) grads.push_back(p->grad);
  sgd_step(state, grads, lr, momentum);
}

double clip_gradients(const std::vector<nn::Parameter*>& parameters, double max_norm) {
  double sq = 0.0;
  for (const auto* p : parameters)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto* p : parameters)
      for (double& g : p->grad.data()) g *= f;
  }
  return norm;
}

Checkpoint make_checkpoint(TFNetModel& model, const RunConfig& cfg, const std::vector<std::string>& class_names,
                           std::uint64_t step) {
  Checkpoint ckpt = capture(model.parameters(), model.buffers());
  ckpt.seed = cfg.train.seed;
  ckpt.step = step;
  ckpt.meta = {{"config", to_json(cfg)}, {"class_names", class_names}, {"num_classes", model.spec().num_classes}};
  return ckpt;
}

LoadedModel load_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (!ckpt.meta.contains("config") || !ckpt.meta.contains("num_classes")) {
    throw DataError("checkpoint " + path.string() + " has no model metadata");
  }
  LoadedModel out;
  out.config = parse_config(ckpt.meta["config"]);
  if (ckpt.meta.contains("class_names")) out.class_names = ckpt.meta["class_names"].get<std::vector<std::string>>();
  out.model = std::make_unique<TFNetModel>(model_spec(out.config, ckpt.meta["num_classes"].get<std::size_t>()));
  restore(ckpt, out.model->parameters(), out.model->buffers());
  return out;
}

TrainResult train(const DatasetIndex& index, const RunConfig& cfg, TFNetModel& model, const TrainOptions& options) {
  const TrainConfig& tc = cfg.train;
  const ModelSpec& spec = model.spec();
  const ClipOptions clip_opts = cfg.input.clip_options();
  const std::size_t V = index.videos.size();
  if (V == 0) throw DataError("training set is empty");
  for (const auto& v : index.videos)
    if (v.class_id >= spec.num_classes) throw DataError("video " + v.video_id + " has a class outside the model");

  const bool fixed_items = !tc.augment && !tc.random_start && tc.max_stride == 1;
  std::vector<std::optional<Item>> cache(fixed_items ? V : 0);
  AugmentOptions aug_opts;

  auto load_item = [&](std::size_t video, std::size_t epoch) -> Item {
    if (fixed_items && cache[video]) return *cache[video];
    const VideoRecord& rec = index.videos[video];
    auto rng = stream(tc.seed, epoch, video, 2);
    const std::size_t stride = 1 + below(rng, tc.max_stride);
    const std::size_t span = (clip_opts.depth - 1) * stride;
    const std::size_t starts = rec.frame_count() > span ? rec.frame_count() - span : 1;
    const std::size_t start = tc.random_start ? below(rng, starts) : 0;
    const std::uint64_t aug_seed = rng();
    ClipSample clip = load_clip(rec, start, stride, clip_opts);
    if (tc.augment) clip = augment(clip, aug_opts, aug_seed);
    Item item = make_item(clip, spec);
    if (fixed_items) cache[video] = item;
    return item;
  };

  const std::size_t per_epoch = (V + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total = tc.max_iterations ? tc.max_iterations : tc.epochs * per_epoch;
  const double K = static_cast<double>(clip_opts.keyframe_size);

  TrainState state = make_train_state(model.parameters());
  TrainResult result;
  log(LogLevel::Info, "training " + std::to_string(total) + " iterations on " + std::to_string(V) + " videos");

  std::vector<std::size_t> order;
  for (std::size_t it = 0; it < total; ++it) {
    const std::size_t epoch = it / per_epoch, pos = it % per_epoch;
    if (pos == 0) order = permutation(V, tc.seed, epoch);
    state.epoch = epoch;
    const std::size_t b0 = pos * tc.batch_size, b1 = std::min(V, b0 + tc.batch_size);

    std::vector<Tensor> freq, clips;
    std::vector<GroundTruthFrame> gts;
    for (std::size_t k = b0; k < b1; ++k) {
      Item item = load_item(order[k], epoch);
      if (!spec.time_only) freq.push_back(std::move(item.frequency));
      clips.push_back(std::move(item.clip));
      gts.push_back(std::move(item.gt));
    }
    const std::size_t N = clips.size();
    const Tensor freq_batch = spec.time_only ? Tensor() : stack(freq);
    const Tensor grid = model.forward(freq_batch, stack(clips), nn::Mode::Train);
    const std::size_t S = grid.dim(2);

    Tensor grad(grid.shape());
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const Assignment as = assign_targets(gts[n], K, K, cfg.model.anchors, S);
      const LossResult lr = detection_loss(grid.item(n), as, cfg.model.anchors, spec.num_classes, cfg.loss);
      loss += lr.total;
      grad.set_item(n, scale(lr.grad, 1.0 / static_cast<double>(N)));
    }
    loss /= static_cast<double>(N);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << it << " (epoch " << epoch << ", batch " << pos << ": videos";
      for (std::size_t k = b0; k < b1; ++k) msg << ' ' << index.videos[order[k]].video_id;
      msg << ")";
      throw NumericalError(msg.str());
    }

    model.zero_grad();
    model.backward(grad);
    clip_gradients(state.parameters, tc.clip_norm);
    const double lr = lr_schedule(it, tc);
    sgd_step(state, lr, tc.momentum);

    result.losses.push_back(loss);
    result.learning_rates.push_back(lr);
    if (options.log) *options.log << format_log(it, loss, lr) << '\n';
    log(LogLevel::Debug, format_log(it, loss, lr));
    if (!options.checkpoint.empty() && tc.checkpoint_every && (it + 1) % tc.checkpoint_every == 0 && it + 1 < total) {
      auto path = options.checkpoint;
      path += ".iter" + std::to_string(it + 1);
      write_checkpoint(path, make_checkpoint(model, cfg, options.class_names, it + 1));
    }
  }
  result.iterations = total;
  result.epochs = total == 0 ? 0 : (total - 1) / per_epoch + 1;
  if (!options.checkpoint.empty()) {
    write_checkpoint(options.checkpoint, make_checkpoint(model, cfg, options.class_names, total));
  }
  return result;
}

std::vector<Detection> detect(TFNetModel& model, const RunConfig& cfg, const ClipSample& clip, std::size_t frame_id) {
  const ModelInput in = prepare_inputs(std::span<const ClipSample>(&clip, 1), model.spec());
  const Tensor grid = model.forward(in.frequency, in.clip, nn::Mode::Eval);
  const double W = static_cast<double>(clip.source_width ? clip.source_width : clip.keyframe.width);
  const double H = static_cast<double>(clip.source_height ? clip.source_height : clip.keyframe.height);
  auto dets = decode(grid.item(0), cfg.model.anchors, model.spec().num_classes, W, H, cfg.eval.conf_threshold, frame_id);
  return nms(std::move(dets), cfg.eval.nms_iou);
}

Evaluation evaluate(TFNetModel& model, const DatasetIndex& index, const RunConfig& cfg) {
  Evaluation ev;
  const ClipOptions opts = cfg.input.clip_options();
  for (std::size_t i = 0; i < index.videos.size(); ++i) {
    const VideoRecord& rec = index.videos[i];
    const ClipSample clip = load_clip(rec, 0, 1, opts);
    const std::size_t key = clip.gt.frame_id;
    const std::size_t uid = frame_uid(index, i, key);
    GroundTruthFrame gt{uid, {}};
    for (const auto& f : rec.labels)
      if (f.frame_id == key) gt.boxes = f.boxes;
    ev.ground_truth.push_back(std::move(gt));
    for (auto& d : detect(model, cfg, clip, uid)) ev.detections.push_back(d);
  }
  ev.report = frame_map(ev.detections, ev.ground_truth, model.spec().num_classes, cfg.eval.iou);
  ev.localization = localization_accuracy(ev.detections, ev.ground_truth, cfg.eval.iou);
  return ev;
}

SaliencyResult guided_backprop(TFNetModel& model, const RunConfig& cfg, const ClipSample& clip) {
  const ModelSpec& spec = model.spec();
  const ModelInput in = prepare_inputs(std::span<const ClipSample>(&clip, 1), spec);
  set_guided(model, true);
  SaliencyResult out;
  try {
    const Tensor grid = model.forward(in.frequency, in.clip, nn::Mode::Eval);
    const std::size_t S = grid.dim(2);
    const GridLayout layout{spec.num_classes, cfg.model.anchors.size()};
    const Tensor g0 = grid.item(0);
    auto at = [&](std::size_t c, std::size_t i, std::size_t j) { return g0[(c * S + i) * S + j]; };
    Tensor seed_grad(grid.shape());
    auto gidx = [&](std::size_t c, std::size_t i, std::size_t j) { return (c * S + i) * S + j; };

    // Highest conf * class probability over every slot.
    double best = -1.0;
    std::size_t bi = 0, bj = 0, ba = 0, bc = 0;
    std::vector<double> best_probs;
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j)
        for (std::size_t a = 0; a < layout.anchors; ++a) {
          std::vector<double> p(spec.num_classes);
          double mx = -INFINITY, z = 0.0;
          for (std::size_t k = 0; k < p.size(); ++k) mx = std::max(mx, at(layout.channel(a, 5 + k), i, j));
          for (std::size_t k = 0; k < p.size(); ++k) z += p[k] = std::exp(at(layout.channel(a, 5 + k), i, j) - mx);
          for (auto& x : p) x /= z;
          const std::size_t c = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
          const double score = sigmoid(at(layout.channel(a, 4), i, j)) * p[c];
          if (score > best) {
            best = score;
            bi = i, bj = j, ba = a, bc = c;
            best_probs = p;
          }
        }
    if (best >= cfg.eval.conf_threshold) {
      const double s = sigmoid(at(layout.channel(ba, 4), bi, bj));
      const double pc = best_probs[bc];
      seed_grad[gidx(layout.channel(ba, 4), bi, bj)] = s * (1 - s) * pc;
      for (std::size_t k = 0; k < spec.num_classes; ++k) {
        seed_grad[gidx(layout.channel(ba, 5 + k), bi, bj)] = s * pc * ((k == bc ? 1.0 : 0.0) - best_probs[k]);
      }
      const double K = static_cast<double>(clip.keyframe.width);
      for (const auto& d : decode(g0, cfg.model.anchors, spec.num_classes, K, K, best, 0))
        if (d.score == best) out.target = d;
    } else {
      out.fallback = true;
      double mx = -INFINITY;
      std::size_t arg = 0;
      for (std::size_t a = 0; a < layout.anchors; ++a)
        for (std::size_t k = 0; k < spec.num_classes; ++k)
          for (std::size_t i = 0; i < S; ++i)
            for (std::size_t j = 0; j < S; ++j)
              if (at(layout.channel(a, 5 + k), i, j) > mx) {
                mx = at(layout.channel(a, 5 + k), i, j);
                arg = gidx(layout.channel(a, 5 + k), i, j);
                out.target.class_id = k;
              }
      seed_grad[arg] = 1.0;
    }

    model.zero_grad();
    const auto [gfreq, gclip] = model.backward(seed_grad);
    const std::size_t D = gclip.dim(2), H = gclip.dim(3), W = gclip.dim(4);
    for (std::size_t d = 0; d < D; ++d) {
      Tensor m({H, W});
      for (std::size_t c = 0; c < gclip.dim(1); ++c)
        for (std::size_t p = 0; p < H * W; ++p) m[p] += std::abs(gclip[((c * D) + d) * H * W + p]);
      out.frame_maps.push_back(std::move(m));
    }
    if (!spec.time_only) {
      const std::size_t C = gfreq.dim(1), R = gfreq.dim(2), Q = gfreq.dim(3);
      for (std::size_t c = 0; c < C; ++c) {
        Tensor m({R, Q});
        for (std::size_t p = 0; p < R * Q; ++p) m[p] = std::abs(gfreq[c * R * Q + p]);
        out.channel_maps.push_back(std::move(m));
      }
    }
  } catch (...) {
    set_guided(model, false);
    throw;
  }
  set_guided(model, false);
  return out;
}

void write_saliency(const SaliencyResult& result, const std::filesystem::path& dir, const std::string& format) {
  if (format != "png" && format != "pgm") throw ConfigError("saliency format must be png or pgm");
  std::filesystem::create_directories(dir);
  auto save = [&](const Tensor& map, const std::string& stem) {
    const GrayImage img = to_gray(map);
    const auto path = dir / (stem + "." + format);
    if (format == "png") write_png(path, img);
    else write_pgm(path, img);
  };
  char name[64];
  for (std::size_t d = 0; d < result.frame_maps.size(); ++d) {
    std::snprintf(name, sizeof name, "frame_%03zu", d);
    save(result.frame_maps[d], name);
  }
  const std::size_t per = result.channel_maps.size() / 3;
  static const char* comp[] = {"Y", "Cb", "Cr"};
  for (std::size_t c = 0; c < result.channel_maps.size(); ++c) {
    std::snprintf(name, sizeof name, "dct_%s_%02zu", comp[c / per], c % per);
    save(result.channel_maps[c], name);
  }
}

}  // namespace tfnet
