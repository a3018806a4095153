#include <gtest/gtest.h>

#include <fstream>

#include "cli_runner.hpp"
#include "tempdir.hpp"
#include "tfnet/data.hpp"
#include "tfnet/dct.hpp"
#include "tfnet/metrics.hpp"

using namespace tfnet;

TEST(Cli, UnknownFlagIsUsageError) {
  TempDir dir("cli_usage");
  const auto r = cli::run("eval --no-such-flag", dir.path());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(r.err.rfind("ERROR 2: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(cli::run("", dir.path()).exit_code, 2);
}

TEST(Cli, MissingDataIsDataError) {
  TempDir dir("cli_data");
  const auto r = cli::run("eval --dets nothing.txt --data '" + (dir / "none").string() + "' --report r.txt",
                          dir.path());
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_EQ(r.err.rfind("ERROR 3: ", 0), 0u) << r.err;
}

TEST(Cli, GrayImageHasOnlyDcChannels) {
  TempDir dir("cli_dct");
  write_png(dir / "gray.png", RgbImage(24, 40, 128));
  const auto r = cli::run("dct-export --image '" + (dir / "gray.png").string() + "' --lambda 1 --out '" +
                              (dir / "gray.dctt").string() + "'",
                          dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const Tensor v = read_dctt(dir / "gray.dctt");
  ASSERT_EQ(v.shape(), (Shape{192, 3, 5}));
  const std::size_t plane = 3 * 5;
  for (std::size_t c = 0; c < 192; ++c) {
    double mx = 0;
    for (std::size_t p = 0; p < plane; ++p) mx = std::max(mx, std::abs(v[c * plane + p]));
    if (c % 64 == 0)
      EXPECT_GT(mx, 0.0) << "channel " << c;
    else
      EXPECT_LT(mx, 1e-3) << "channel " << c;
  }
}

TEST(Cli, PerfectDetectionsScoreOne) {
  TempDir dir("cli_eval");
  const auto data = dir / "data";
  ASSERT_EQ(cli::run("synth-data --spec '{\"classes\":3,\"clips_per_class\":2,\"image_size\":64,\"frames\":5}' "
                     "--seed 4 --out '" + data.string() + "'",
                     dir.path())
                .exit_code,
            0);
  const auto index = build_index(data);
  std::vector<Detection> dets;
  for (const auto& f : all_ground_truth(index))
    for (const auto& b : f.boxes) dets.push_back({f.frame_id, b.class_id, 0.9, b.box});
  {
    std::ofstream out(dir / "dets.txt");
    write_detections(out, dets);
  }
  const auto r = cli::run("eval --dets '" + (dir / "dets.txt").string() + "' --data '" + data.string() +
                              "' --iou 0.5 --report '" + (dir / "report.txt").string() + "'",
                          dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("mAP 1.000\n"), std::string::npos) << r.out;
  std::ifstream in(dir / "report.txt");
  const auto table = read_ap_table(in);
  EXPECT_EQ(table.report.map, 1.0);
  EXPECT_EQ(table.class_names, index.class_names);
}

TEST(Cli, SynthDataIsReproducible) {
  TempDir dir("cli_synth");
  for (const char* name : {"a", "b"})
    ASSERT_EQ(cli::run(std::string("synth-data --spec '{\"classes\":2,\"clips_per_class\":1,\"image_size\":48,"
                                   "\"frames\":3}' --seed 9 --out '") +
                           (dir / name).string() + "'",
                       dir.path())
                  .exit_code,
              0);
  EXPECT_EQ(cli::read_file(dir / "a/train/labels/c1_v000.txt"), cli::read_file(dir / "b/train/labels/c1_v000.txt"));
  EXPECT_EQ(cli::read_file(dir / "a/train/vertical_drift/c1_v000/frame_00002.png"),
            cli::read_file(dir / "b/train/vertical_drift/c1_v000/frame_00002.png"));
}
