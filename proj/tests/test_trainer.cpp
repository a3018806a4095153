#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "oracles.hpp"
#include "tempdir.hpp"
#include "tfnet/error.hpp"
#include "tfnet/trainer.hpp"

using namespace tfnet;

namespace {

RunConfig tiny_config() {
  nlohmann::json doc = nlohmann::json::object();
  for (const char* o : {"input.depth=4", "input.frame_size=32", "input.keyframe_size=64", "train.batch_size=4",
                        "train.lr=0.01", "train.augment=false", "train.random_start=false", "train.max_stride=1",
                        "train.epochs=6", "train.seed=7", "eval.conf_threshold=0.0"})
    apply_override(doc, o);
  return parse_config(doc);
}

class TinyData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("trainer");
    SynthSpec spec;
    spec.num_classes = 2;
    spec.clips_per_class = 2;
    spec.image_size = 64;
    spec.frames = 6;
    synth_dataset(spec, 3, dir_->path());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static TempDir* dir_;
};
TempDir* TinyData::dir_ = nullptr;

}  // namespace

TEST(LrSchedule, HalvesEveryInterval) {
  TrainConfig c;
  EXPECT_EQ(lr_schedule(0, c), 1e-4);
  EXPECT_EQ(lr_schedule(9999, c), 1e-4);
  EXPECT_EQ(lr_schedule(10000, c), 5e-5);
  EXPECT_EQ(lr_schedule(25000, c), 2.5e-5);
  for (std::size_t i = 0; i <= 25000; ++i)
    ASSERT_EQ(lr_schedule(i, c), 1e-4 * std::pow(0.5, static_cast<double>(i / 10000)));
}

TEST(Sgd, PlainStepWithoutMomentum) {
  nn::Parameter p{"w", Tensor({2}, 1.0), Tensor({2})};
  auto state = make_train_state({&p});
  const std::vector<Tensor> g{Tensor({2}, 0.5)};
  sgd_step(state, g, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p.value[0], 1.0 - 0.1 * 0.5);
}

TEST(Sgd, MomentumRecurrence) {
  nn::Parameter p{"w", Tensor({3}, 0.0), Tensor({3})};
  auto state = make_train_state({&p});
  const std::vector<Tensor> g{Tensor({3}, 2.0)};
  sgd_step(state, g, 0.1, 0.9);
  const double after_first = p.value[0];
  sgd_step(state, g, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(after_first - p.value[0], 0.1 * 1.9 * 2.0);
}

TEST(Sgd, ZeroGradientKeepsParameters) {
  nn::Parameter p{"w", Tensor({4}, 3.0), Tensor({4})};
  auto state = make_train_state({&p});
  for (int i = 0; i < 10; ++i) sgd_step(state, 0.5, 0.9);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.value[i], 3.0);
  const std::vector<Tensor> wrong{Tensor({5})};
  EXPECT_THROW(sgd_step(state, wrong, 0.1, 0.9), ShapeError);
}

TEST(Sgd, GlobalNormClipping) {
  nn::Parameter a{"a", Tensor({1}), Tensor({1}, 3.0)};
  nn::Parameter b{"b", Tensor({1}), Tensor({1}, 4.0)};
  EXPECT_DOUBLE_EQ(clip_gradients({&a, &b}, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad[0], 0.6);
  EXPECT_DOUBLE_EQ(b.grad[0], 0.8);
  EXPECT_DOUBLE_EQ(clip_gradients({&a, &b}, 10.0), 1.0);
  EXPECT_DOUBLE_EQ(a.grad[0], 0.6);
}

TEST(Guided, RectifierRule) {
  EXPECT_EQ(nn::guided_gradient(-1.0, 5.0), 0.0);
  EXPECT_EQ(nn::guided_gradient(2.0, -5.0), 0.0);
  EXPECT_EQ(nn::guided_gradient(2.0, 5.0), 5.0);
}

TEST_F(TinyData, SmokeRunReducesLoss) {
  const auto index = build_index(dir_->path());
  const RunConfig cfg = tiny_config();
  TFNetModel model(model_spec(cfg, index.class_names.size()));
  model.initialize(cfg.train.seed);
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  const auto r = train(index, cfg, model, opts);
  ASSERT_EQ(r.losses.size(), 6u);
  EXPECT_LT(r.losses.back(), r.losses.front());
  std::istringstream lines(log.str());
  std::size_t it = 0;
  double loss = 0, lr = 0;
  for (std::size_t k = 0; k < r.losses.size(); ++k) {
    ASSERT_TRUE(lines >> it >> loss >> lr);
    EXPECT_EQ(it, k);
    EXPECT_EQ(lr, lr_schedule(k, cfg.train));
  }
}

TEST_F(TinyData, LearningRateTraceFollowsSchedule) {
  const auto index = build_index(dir_->path());
  RunConfig cfg = tiny_config();
  cfg.train.halving_interval = 2;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 1;
  TFNetModel model(model_spec(cfg, index.class_names.size()));
  model.initialize(1);
  const auto r = train(index, cfg, model, {});
  ASSERT_EQ(r.learning_rates.size(), 8u);
  for (std::size_t i = 0; i < r.learning_rates.size(); ++i) EXPECT_EQ(r.learning_rates[i], lr_schedule(i, cfg.train));
}

TEST_F(TinyData, SameSeedSameTraceAndCheckpoint) {
  const auto index = build_index(dir_->path());
  RunConfig cfg = tiny_config();
  cfg.train.epochs = 2;
  cfg.train.augment = true;
  cfg.train.random_start = true;
  cfg.train.max_stride = 2;
  std::vector<std::vector<double>> traces;
  for (int run = 0; run < 2; ++run) {
    TFNetModel model(model_spec(cfg, index.class_names.size()));
    model.initialize(cfg.train.seed);
    TrainOptions opts;
    opts.checkpoint = *dir_ / ("det" + std::to_string(run) + ".ckpt");
    traces.push_back(train(index, cfg, model, opts).losses);
  }
  EXPECT_EQ(traces[0], traces[1]);
  const auto a = read_checkpoint(*dir_ / "det0.ckpt"), b = read_checkpoint(*dir_ / "det1.ckpt");
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
    EXPECT_TRUE(std::ranges::equal(a.tensors[i].second.data(), b.tensors[i].second.data()));
  }
}

TEST_F(TinyData, CheckpointRoundTripReproducesOutputs) {
  const auto index = build_index(dir_->path());
  const RunConfig cfg = tiny_config();
  TFNetModel model(model_spec(cfg, index.class_names.size()));
  model.initialize(21);
  const auto path = *dir_ / "round.ckpt";
  write_checkpoint(path, make_checkpoint(model, cfg, index.class_names, 0));
  auto loaded = load_model(path);
  EXPECT_EQ(loaded.class_names, index.class_names);
  const auto clip = load_clip(index.videos[0], 0, 1, cfg.input.clip_options());
  const auto in = prepare_inputs(std::span<const ClipSample>(&clip, 1), model.spec());
  const Tensor a = model.forward(in.frequency, in.clip, nn::Mode::Eval);
  const Tensor b = loaded.model->forward(in.frequency, in.clip, nn::Mode::Eval);
  EXPECT_TRUE(std::ranges::equal(a.data(), b.data()));
}

TEST_F(TinyData, GuidedSaliencyRespectsRectifierRule) {
  const auto index = build_index(dir_->path());
  for (bool time_only : {false, true}) {
    RunConfig cfg = tiny_config();
    cfg.model.time_only = time_only;
    TFNetModel model(model_spec(cfg, index.class_names.size()));
    model.initialize(5);
    const auto clip = load_clip(index.videos[1], 0, 1, cfg.input.clip_options());
    const auto sal = guided_backprop(model, cfg, clip);
    ASSERT_EQ(sal.frame_maps.size(), cfg.input.depth);
    EXPECT_EQ(sal.channel_maps.size(), time_only ? 0u : 192u);
    std::size_t sites = 0, nonzero = 0;
    model.visit([&](nn::Layer& layer) {
      auto* act = dynamic_cast<nn::Activation*>(&layer);
      if (act == nullptr) return;
      ++sites;
      const Tensor& x = act->last_input();
      const Tensor& g = act->last_input_gradient();
      ASSERT_EQ(x.size(), g.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_GE(g[i], 0.0);
        if (x[i] <= 0.0) EXPECT_EQ(g[i], 0.0);
        nonzero += g[i] != 0.0;
      }
    });
    EXPECT_GT(sites, 0u);
    EXPECT_GT(nonzero, 0u);
    TempDir out("saliency");
    write_saliency(sal, out.path(), "pgm");
    EXPECT_TRUE(fs::exists(out / "frame_000.pgm"));
    if (!time_only) EXPECT_TRUE(fs::exists(out / "dct_Cr_63.pgm"));
  }
}
