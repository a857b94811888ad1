#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "cloudmask/cloudmask.hpp"

#ifndef CLOUDMASK_CLI
#define CLOUDMASK_CLI "cloudmask"
#endif

using namespace cloudmask;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path p = fs::path(::testing::TempDir()) / "cloudmask_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

CliRun run(const std::string& args) {
  const char* env = std::getenv("CLOUDMASK_CLI");
  const std::string exe = env ? env : CLOUDMASK_CLI;
  const fs::path out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = "\"" + exe + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = detail::read_text_file(out);
  r.err = detail::read_text_file(err);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Writes a small synthetic scene through the CLI and returns its directory.
fs::path synth_scene() {
  static const fs::path dir = [] {
    const fs::path d = workdir() / "scene";
    const fs::path spec = workdir() / "scene.txt";
    detail::write_text_file(spec,
                            "width=128\nheight=128\nsun_zenith_deg=35\nsun_azimuth_deg=140\n"
                            "cloud.1.center_east_m=4200\ncloud.1.center_north_m=-3000\n"
                            "cloud.1.semi_major_m=1100\ncloud.1.semi_minor_m=800\ncloud.1.height_m=3000\n");
    const CliRun r = run("synth --spec " + q(spec) + " --output-dir " + q(d));
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  const CliRun r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("pipeline"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  CliRun r = run("");
  EXPECT_EQ(r.code, 1);
  r = run("frobnicate");
  EXPECT_EQ(r.code, 1);
  r = run("pipeline --input x.hdr --no-such-flag");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  r = run("segment --input a.hdr --output b.hdr --connectivity 6");
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, MissingInputExitsTwo) {
  const CliRun r = run("pipeline --input " + q(workdir() / "absent.hdr") + " --output-dir " + q(workdir() / "x"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("absent.hdr"), std::string::npos);
}

TEST(Cli, InvalidConfigExitsOne) {
  const fs::path cfg = workdir() / "bad.cfg";
  detail::write_text_file(cfg, "detection=nowhere.txt\n");
  const CliRun r = run("pipeline --input " + q(synth_scene() / "image.hdr") + " --config " + q(cfg));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run("synth --random 3 --spec " + q(cfg)).code, 1);
}

TEST(Cli, SynthWritesImageAndTruth) {
  const fs::path d = synth_scene();
  for (const char* f : {"image.hdr", "truth.hdr", "truth_clouds.csv", "spec.txt"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const LabelRaster truth = read_label_raster(d / "truth.hdr");
  EXPECT_EQ(truth.labels.width(), 128u);
  EXPECT_EQ(read_image(d / "image.hdr").units(), Units::TOARF);
}

TEST(Cli, PipelineOnSynthScene) {
  const fs::path out = workdir() / "pipe";
  const CliRun r = run("pipeline --input " + q(synth_scene() / "image.hdr") + " --output-dir " + q(out));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"mask.hdr", "objects.csv", "pseudocolor.ppm", "report.txt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const std::string report = detail::read_text_file(out / "report.txt");
  EXPECT_NE(report.find("calibrated (SIAM + RGBIAM)"), std::string::npos);
  EXPECT_NE(report.find("clouds with matched shadow: 1"), std::string::npos);

  const CliRun v = run("validate --mapped " + q(out / "mask.hdr") + " --reference " +
                    q(synth_scene() / "truth.hdr") + " --per-class 200 --csv " + q(workdir() / "acc.csv"));
  EXPECT_EQ(v.code, 0) << v.err;
  EXPECT_NE(v.out.find("overall"), std::string::npos);
  EXPECT_TRUE(fs::exists(workdir() / "acc.csv"));
}

TEST(Cli, RgbPixmapTakesUncalibratedPath) {
  const MultiSpectralImage img = read_image(synth_scene() / "image.hdr");
  RgbPixmap pm{img.width(), img.height(), {}};
  pm.pixels.resize(img.width() * img.height());
  const BandRole roles[] = {BandRole::R, BandRole::G, BandRole::B};
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < pm.pixels.size(); ++i)
      pm.pixels[i][k] = static_cast<std::uint8_t>(std::min(255.0f, img.band(roles[k]).values[i] * 255.0f));
  const fs::path ppm = workdir() / "scene.ppm", out = workdir() / "rgb";
  write_ppm(ppm, pm);
  const CliRun r = run("pipeline --input " + q(ppm) + " --output-dir " + q(out));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(detail::read_text_file(out / "report.txt").find("uncalibrated (RGBIAM only)"), std::string::npos);
}

TEST(Cli, StagesChain) {
  const fs::path img = synth_scene() / "image.hdr";
  const fs::path d = workdir() / "stages";
  fs::create_directories(d);
  CliRun r = run("quantize --input " + q(img) + " --output " + q(d / "cat.hdr") + " --pseudocolor " + q(d / "cat.ppm"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("segment --input " + q(d / "cat.hdr") + " --output " + q(d / "seg.hdr") + " --table " + q(d / "seg.csv") +
          " --tile-size 50");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_label_raster(d / "seg.hdr").kind, LabelKind::Segments);
  r = run("detect --image " + q(img) + " --categories " + q(d / "cat.hdr") + " --output-dir " + q(d / "det"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "det" / "objects.csv"));
  r = run("stretch --input " + q(img) + " --output " + q(d / "st.hdr") + " --lut " + q(d / "lut.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_image(d / "st.hdr").bands().size(), 3u);
  // Already TOARF: calibration refuses it as a configuration error.
  EXPECT_EQ(run("calibrate --input " + q(img) + " --output " + q(d / "cal.hdr")).code, 1);
}

TEST(Cli, PipelineIsDeterministic) {
  const fs::path a = workdir() / "det_a", b = workdir() / "det_b";
  ASSERT_EQ(run("--threads 1 pipeline --input " + q(synth_scene() / "image.hdr") + " --output-dir " + q(a)).code, 0);
  ASSERT_EQ(run("--threads 3 pipeline --input " + q(synth_scene() / "image.hdr") + " --output-dir " + q(b)).code, 0);
  for (const auto& e : fs::directory_iterator(a))
    EXPECT_EQ(detail::read_text_file(e.path()), detail::read_text_file(b / e.path().filename())) << e.path();
}
