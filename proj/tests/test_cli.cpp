#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <sstream>

#include "pano/dataio.hpp"
#include "pano/scene.hpp"
#include "support.hpp"

using namespace pano;
using testing::TempDir;
using testing::slurp;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const TempDir& dir, const std::string& args) {
  static int n = 0;
  const fs::path o = dir / ("stdout" + std::to_string(n)), e = dir / ("stderr" + std::to_string(n++));
  const std::string cmd = std::string(PANO_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

std::string p(const fs::path& x) { return "'" + x.string() + "'"; }

// Every regular file under root, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

std::size_t line_count(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  TempDir dir("usage");
  CHECK(cli(dir, "").code == 1);
  CHECK(cli(dir, "frobnicate").code == 1);
  CHECK(cli(dir, "project rotate --input " + p(dir / "none.png") + " --output x.png --seed 1").code == 1);
  CHECK(cli(dir, "--help").code == 0);

  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c")).code == 0);
  const std::string in = p(dir / "c/rgb/lab0000.png");
  const Run missing_seed = cli(dir, "project rotate --input " + in + " --output " + p(dir / "r.png"));
  CHECK(missing_seed.code == 1);
  CHECK(missing_seed.err.find("--seed") != std::string::npos);
  CHECK(cli(dir, "project rotate --input " + in + " --output " + p(dir / "r.png") + " --seed 1 --mode spin").code == 1);
  CHECK(cli(dir, "eval --pred-manifest " + p(dir / "c/labeled.jsonl") + " --gt-manifest " +
                     p(dir / "c/labeled.jsonl") + " --align mean")
            .code == 1);
  CHECK(cli(dir, "stats " + p(dir / "c/labeled.jsonl") + " --config " + p(dir / "nope.json")).code == 1);
}

TEST_CASE("synth and stats") {
  TempDir dir("stats");
  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c") + " --labeled 3 --unlabeled 2 --height 16").code == 0);
  const Run r = cli(dir, "stats " + p(dir / "c/labeled.jsonl") + " " + p(dir / "c/unlabeled.jsonl") + " --json " +
                             p(dir / "s.json"));
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "s.json"));
  CHECK(j["total"]["labeled"] == 3);
  CHECK(j["total"]["unlabeled"] == 2);
  CHECK(j["per_source"]["synthetic-labeled"]["labeled"] == 3);
  CHECK(j["per_source"]["synthetic-unlabeled"]["unlabeled"] == 2);
  CHECK(r.out.find("total") != std::string::npos);
  CHECK(line_count(slurp(dir / "c/labeled.jsonl")) == 4);
}

TEST_CASE("mask-filter drops the sparse sample") {
  TempDir dir("filter");
  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c") + " --labeled 0 --unlabeled 3 --height 20 --mask-valid 0.1,1,0.2")
              .code == 0);
  const Run r = cli(dir, "mask-filter --manifest " + p(dir / "c/unlabeled.jsonl") + " --output " +
                             p(dir / "c/kept.jsonl") + " --report " + p(dir / "rep.json"));
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("kept 2, rejected 1", 0) == 0);
  const DatasetManifest kept = read_manifest(dir / "c/kept.jsonl");
  REQUIRE(kept.records.size() == 2);
  CHECK(kept.records[0].id == "unl0001");
  CHECK(kept.records[1].id == "unl0002");
  const auto rep = nlohmann::json::parse(slurp(dir / "rep.json"));
  CHECK(rep.dump().find("unl0000") != std::string::npos);
}

TEST_CASE("eval against a hand-computed oracle") {
  TempDir dir("eval");
  const AnalyticScene scene = AnalyticScene::parse("unit_sphere_room@0.3,-0.2,0.1");
  const DepthMap gt = scene.render_depth(16);
  DatasetManifest gm, pm, sm;
  std::mt19937_64 rng(5);
  double oracle = 0;
  for (int i = 0; i < 3; ++i) {
    const std::string id = "s" + std::to_string(i);
    write_rgb8(dir / (id + ".png"), scene.render_rgb(16));
    write_depth_png16(dir / (id + "_gt.png"), gt);
    DepthMap noisy = gt, scaled = load_depth(dir / (id + "_gt.png"));
    for (double& v : noisy.values.values()) v = std::round(v * 4000 * uniform(rng, 0.8, 1.2)) / 4000;
    for (double& v : scaled.values.values()) v *= 2;
    write_depth_png16(dir / (id + "_noisy.png"), noisy);
    write_depth_png16(dir / (id + "_x2.png"), scaled);
    gm.records.push_back({id, id + ".png", id + "_gt.png", std::nullopt, Split::Test, "t", std::nullopt});
    pm.records.push_back({id, id + ".png", id + "_noisy.png", std::nullopt, Split::Test, "t", std::nullopt});
    sm.records.push_back({id, id + ".png", id + "_x2.png", std::nullopt, Split::Test, "t", std::nullopt});

    // AbsRel without alignment, from the quantized files.
    const DepthMap g = load_depth(dir / (id + "_gt.png")), q = load_depth(dir / (id + "_noisy.png"));
    double s = 0;
    for (std::size_t k = 0; k < g.size(); ++k) s += std::abs(q[k] - g[k]) / g[k];
    oracle += s / double(g.size()) / 3;
  }
  write_manifest(dir / "gt.jsonl", gm);
  write_manifest(dir / "pred.jsonl", pm);
  write_manifest(dir / "x2.jsonl", sm);

  const Run none = cli(dir, "eval --pred-manifest " + p(dir / "pred.jsonl") + " --gt-manifest " + p(dir / "gt.jsonl") +
                                " --align none --output " + p(dir / "r.json"));
  REQUIRE(none.code == 0);
  const auto j = nlohmann::json::parse(none.out);
  CHECK(j["samples"].size() == 3);
  CHECK(std::abs(j["aggregate"]["abs_rel"].get<double>() - oracle) < 1e-12);
  CHECK(j["aggregate"]["n_pixels"] == 3 * 16 * 32);
  CHECK(nlohmann::json::parse(slurp(dir / "r.json")) == j);
  CHECK(none.err.find("AbsRel") != std::string::npos);

  const Run x2 = cli(dir, "eval --pred-manifest " + p(dir / "x2.jsonl") + " --gt-manifest " + p(dir / "gt.jsonl"));
  REQUIRE(x2.code == 0);
  const auto k = nlohmann::json::parse(x2.out);
  CHECK(k["align"] == "median");
  CHECK(k["aggregate"]["abs_rel"].get<double>() < 1e-9);
  CHECK(k["aggregate"]["delta1"] == 1.0);
  const auto raw = nlohmann::json::parse(
      cli(dir, "eval --align none --pred-manifest " + p(dir / "x2.jsonl") + " --gt-manifest " + p(dir / "gt.jsonl")).out);
  CHECK(raw["aggregate"]["abs_rel"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(raw["aggregate"]["delta1"] == 0.0);

  sm.records.pop_back();
  write_manifest(dir / "short.jsonl", sm);
  CHECK(cli(dir, "eval --pred-manifest " + p(dir / "short.jsonl") + " --gt-manifest " + p(dir / "gt.jsonl")).code == 2);
}

TEST_CASE("pointcloud of the centered sphere lies on the unit sphere") {
  TempDir dir("ply");
  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c") + " --scene unit_sphere_room --height 24").code == 0);
  const Run r = cli(dir, "pointcloud --depth " + p(dir / "c/depth/lab0000.png") + " --rgb " +
                             p(dir / "c/rgb/lab0000.png") + " --output " + p(dir / "p.ply"));
  REQUIRE(r.code == 0);
  std::istringstream is(slurp(dir / "p.ply"));
  std::string line;
  std::size_t declared = 0, points = 0;
  double worst = 0;
  bool body = false;
  while (std::getline(is, line)) {
    if (!body) {
      if (line.rfind("element vertex ", 0) == 0) declared = std::stoul(line.substr(15));
      body = line == "end_header";
      continue;
    }
    std::istringstream ls(line);
    double x, y, z;
    int cr, cg, cb;
    REQUIRE(static_cast<bool>(ls >> x >> y >> z >> cr >> cg >> cb));
    worst = std::max(worst, std::abs(std::sqrt(x * x + y * y + z * z) - 1));
    CHECK((cr >= 0 && cr <= 255));
    ++points;
  }
  CHECK(declared == 24 * 48);
  CHECK(points == declared);
  CHECK(worst < 1e-6);
}

TEST_CASE("seeded commands are reproducible") {
  TempDir dir("determinism");
  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c") + " --labeled 1 --unlabeled 2 --height 16").code == 0);
  const std::string in = p(dir / "c/rgb/lab0000.png");

  SUBCASE("rotate") {
    for (const char* o : {"a", "b"})
      REQUIRE(cli(dir, "project rotate --input " + in + " --seed 9 --output " + p(dir / (std::string(o) + ".png"))).code ==
              0);
    REQUIRE(cli(dir, "project rotate --input " + in + " --seed 10 --output " + p(dir / "c.png")).code == 0);
    CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
    CHECK(slurp(dir / "a.rotation.json") == slurp(dir / "b.rotation.json"));
    CHECK(slurp(dir / "a.png") != slurp(dir / "c.png"));
    const auto j = nlohmann::json::parse(slurp(dir / "a.rotation.json"));
    CHECK(j["seed"] == 9);
    CHECK(j["rotation"].size() == 3);
  }

  SUBCASE("pseudolabel") {
    const std::string base = "pseudolabel --manifest " + p(dir / "c/unlabeled.jsonl") +
                             " --teacher mock:unit_sphere_room@0.3,-0.2,0.1 --scramble disparity_affine --face-px 8 " +
                             "--seed 4 --out-dir ";
    REQUIRE(cli(dir, base + p(dir / "p1")).code == 0);
    REQUIRE(cli(dir, base + p(dir / "p2") + " --workers 3").code == 0);
    const auto a = tree(dir / "p1"), b = tree(dir / "p2");
    CHECK(a.size() == 1 + 2 * 19);
    CHECK(a == b);
    const DatasetManifest m = read_manifest(dir / "p1/pseudo_manifest.jsonl");
    CHECK(m.records.size() == 2);
    CHECK(m.records[0].pseudo.has_value());
    CHECK(m.header["pseudo"]["seed"] == 4);
    REQUIRE(cli(dir, "pseudolabel --manifest " + p(dir / "c/unlabeled.jsonl") +
                         " --teacher mock:unit_sphere_room@0.3,-0.2,0.1 --face-px 8 --seed 5 --out-dir " + p(dir / "p3"))
                .code == 0);
    CHECK(tree(dir / "p3") != a);
  }

  SUBCASE("train") {
    const std::string base = "train --labeled " + p(dir / "c/labeled.jsonl") + " --unlabeled " +
                             p(dir / "c/unlabeled.jsonl") +
                             " --teacher mock:unit_sphere_room@0.3,-0.2,0.1 --steps 15 --grid-h 4 --face-px 8 --out-dir ";
    const Run a = cli(dir, base + p(dir / "t1") + " --seed 3");
    const Run b = cli(dir, base + p(dir / "t2") + " --seed 3");
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    for (const char* f : {"train_log.jsonl", "model.ckpt", "prediction.pfm", "config.json"})
      CHECK(slurp(dir / "t1" / f) == slurp(dir / "t2" / f));
    CHECK(line_count(slurp(dir / "t1/train_log.jsonl")) == 15);
    CHECK(a.out.find("labeled[0] abs_rel=") != std::string::npos);
    REQUIRE(cli(dir, base + p(dir / "t3") + " --seed 4").code == 0);
    CHECK(slurp(dir / "t3/model.ckpt") != slurp(dir / "t1/model.ckpt"));
  }
}

TEST_CASE("config files supply flags and the command line wins") {
  TempDir dir("config");
  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c") + " --height 16").code == 0);
  std::ofstream(dir / "cfg.json") << R"({"steps": 7, "learning_rate": 0.05, "grid_h": 4, "face_px": 8,
    "teacher": "mock:unit_sphere_room@0.3,-0.2,0.1", "seed": 2, "per_face": true, "scramble": "depth_affine"})";
  const std::string base = "train --config " + p(dir / "cfg.json") + " --labeled " + p(dir / "c/labeled.jsonl") +
                           " --unlabeled " + p(dir / "c/unlabeled.jsonl") + " --out-dir ";
  REQUIRE(cli(dir, base + p(dir / "a")).code == 0);
  CHECK(line_count(slurp(dir / "a/train_log.jsonl")) == 7);
  const auto conf = nlohmann::json::parse(slurp(dir / "a/config.json"));
  CHECK(conf["learning_rate"] == 0.05);
  CHECK(conf["grid_h"] == 4);

  REQUIRE(cli(dir, base + p(dir / "b") + " --steps 3").code == 0);
  CHECK(line_count(slurp(dir / "b/train_log.jsonl")) == 3);

  std::ofstream(dir / "bad.json") << "[1, 2]";
  CHECK(cli(dir, "stats " + p(dir / "c/labeled.jsonl") + " --config " + p(dir / "bad.json")).code == 1);
  std::ofstream(dir / "unknown.json") << R"({"colour": "red"})";
  CHECK(cli(dir, "stats " + p(dir / "c/labeled.jsonl") + " --config " + p(dir / "unknown.json")).code == 1);
}

TEST_CASE("teacher failures exit with 3 and leave no manifest") {
  TempDir dir("backend");
  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c") + " --labeled 0 --unlabeled 3 --height 16").code == 0);
  const std::string base = "pseudolabel --manifest " + p(dir / "c/unlabeled.jsonl") + " --face-px 8 --seed 1 ";

  const Run down = cli(dir, base + "--teacher bridge:/nonexistent/bridge --out-dir " + p(dir / "o1"));
  CHECK(down.code == 3);
  CHECK_FALSE(fs::exists(dir / "o1/pseudo_manifest.jsonl"));

  // Dies partway through the second sample.
  const Run dies = cli(dir, base + "--teacher 'bridge:" + std::string(PANO_STUB_BRIDGE) + " --die-after 8' --out-dir " +
                                p(dir / "o2"));
  CHECK(dies.code == 3);
  CHECK_FALSE(fs::exists(dir / "o2/pseudo_manifest.jsonl"));

  const Run ok = cli(dir, base + "--teacher 'bridge:" + std::string(PANO_STUB_BRIDGE) + "' --out-dir " + p(dir / "o3"));
  CHECK(ok.code == 0);
  const DatasetManifest m = read_manifest(dir / "o3/pseudo_manifest.jsonl");
  CHECK(m.records.size() == 3);
  CHECK(m.header["pseudo"]["teacher"]["tool"] == "stub-bridge");

  CHECK(cli(dir, base + "--teacher oracle --out-dir " + p(dir / "o4")).code == 1);
}

TEST_CASE("data errors exit with 2") {
  TempDir dir("data");
  REQUIRE(cli(dir, "synth --out-dir " + p(dir / "c") + " --height 16").code == 0);
  fs::remove(dir / "c/rgb/lab0000.png");
  CHECK(cli(dir, "stats " + p(dir / "c/labeled.jsonl")).code == 0);  // stats does not open images
  CHECK(cli(dir, "mask-filter --manifest " + p(dir / "c/labeled.jsonl") + " --output " + p(dir / "k.jsonl")).code == 2);
  std::ofstream(dir / "broken.jsonl") << "{\"type\":\"header\"}\n";
  CHECK(cli(dir, "stats " + p(dir / "broken.jsonl")).code == 2);
}

TEST_CASE("projection commands") {
  TempDir dir("project");
  write_rgb8(dir / "pano.png", testing::smooth_rgb_erp(256));
  const Run e2c = cli(dir, "project e2c --input " + p(dir / "pano.png") + " --face-px 128 --out-dir " + p(dir / "f"));
  REQUIRE(e2c.code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "f/pano_e2c.json"));
  CHECK(summary["roundtrip_psnr_db"].get<double>() >= 30);
  for (char f : std::string("FRBLUD")) CHECK(fs::exists(dir / "f" / (std::string("pano_") + f + ".png")));

  REQUIRE(cli(dir, "project c2e --faces-dir " + p(dir / "f") + " --id pano --height 256 --output " + p(dir / "back.png"))
              .code == 0);
  const Raster a = load_rgb8(dir / "pano.png"), b = load_rgb8(dir / "back.png");
  double se = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) se += std::pow(a.values()[i] - b.values()[i], 2);
  CHECK(10 * std::log10(255.0 * 255.0 / (se / double(a.values().size()))) >= 30);

  REQUIRE(cli(dir, "project tangent --input " + p(dir / "pano.png") + " --patch-px 16 --out-dir " + p(dir / "t")).code == 0);
  CHECK(fs::exists(dir / "t/pano_T19.png"));
  CHECK(nlohmann::json::parse(slurp(dir / "t/pano_tangent.json")).dump().find("20") != std::string::npos);
  CHECK(cli(dir, "project tangent --input " + p(dir / "pano.png") + " --patches 30 --out-dir " + p(dir / "t2")).code == 1);
}

TEST_CASE("ingest") {
  TempDir dir("ingest");
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "mask");
  write_rgb8(dir / "rgb/a.png", Raster(8, 16, 3, 10));
  write_rgb8(dir / "rgb/b.png", Raster(8, 16, 3, 20));
  write_mask(dir / "mask/a.png", Mask(8, 16, true));
  const Run r = cli(dir, "ingest --rgb-dir " + p(dir / "rgb") + " --mask-dir " + p(dir / "mask") + " --output " +
                             p(dir / "m.jsonl") + " --source web");
  REQUIRE(r.code == 0);
  const DatasetManifest m = read_manifest(dir / "m.jsonl");
  CHECK(m.records.size() == 2);
  CHECK(m.header.contains("provenance"));
  write_mask(dir / "mask/c.png", Mask(8, 16, true));
  CHECK(cli(dir, "ingest --rgb-dir " + p(dir / "rgb") + " --mask-dir " + p(dir / "mask") + " --output " +
                     p(dir / "m2.jsonl"))
            .code == 2);
}
