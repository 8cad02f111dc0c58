#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "csm/data/csv.hpp"
#include "csm/experiments/cli.hpp"
#include "csm/experiments/config.hpp"
#include "csm/experiments/experiments.hpp"
#include "csm/experiments/metrics.hpp"
#include "doctest.h"

using namespace csm;
using namespace csm::exp;
namespace fs = std::filesystem;

namespace {

// Pairwise count: (2 wins + ties) / (2 n m).
double auroc_pairwise(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::uint64_t twice = 0;
  for (double a : pos) {
    for (double b : neg) twice += a > b ? 2 : (a == b ? 1 : 0);
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "csm-lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("csm_test_experiments_" + name);
  fs::remove_all(p);
  return p;
}

const std::vector<std::string> kSmallFit{
    "--set", "data.n_train=400",      "--set", "optim.max_iters=20", "--set", "optim.max_epochs=5",
    "--set", "schedule.levels=3",     "--set", "sampler.steps=5",    "--set", "sampler.n_samples=40",
    "--set", "fit.grid=5",            "--seed", "7"};

}  // namespace

TEST_CASE("auroc equals the pairwise oracle exactly, ties included") {
  Rng rng(1);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.index(1000);
    const std::size_t m = 1 + rng.index(1000);
    std::vector<double> pos(n), neg(m);
    // Coarse values so that ties are common.
    for (double& v : pos) v = std::floor(rng.normal() * 4.0) + 0.5;
    for (double& v : neg) v = std::floor(rng.normal() * 4.0 - 1.0);
    CHECK(auroc(pos, neg) == auroc_pairwise(pos, neg));
  }
  std::vector<double> a(1000), b(1000);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal() + 0.3;
  CHECK(auroc(a, b) == auroc_pairwise(a, b));
}

TEST_CASE("auroc fixed points and errors") {
  const std::vector<double> x{0.3, 1.2, -4.0, 1.2, 7.0};
  CHECK(auroc(x, x) == 0.5);
  CHECK(auroc(std::vector<double>{5, 6, 7}, std::vector<double>{1, 2}) == 1.0);
  CHECK(auroc(std::vector<double>{1, 2}, std::vector<double>{5, 6, 7}) == 0.0);
  CHECK_THROWS_AS(auroc(std::vector<double>{}, x), InputError);
  CHECK_THROWS_AS(auroc(x, std::vector<double>{}), InputError);
  CHECK_THROWS_AS(auroc(x, std::vector<double>{1.0, std::nan("")}), InputError);
}

TEST_CASE("summary statistics") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(variance(std::vector<double>(1000, -4934.0912345)) == 0.0);
  CHECK(variance(std::vector<double>{1.0, 2.0, 3.0, 4.0}) == doctest::Approx(5.0 / 3.0));
  Matrix cov(2, 2);
  cov << 1.0, 0.8, 0.8, 1.0;
  const double h = 0.5 * std::log(std::pow(2.0 * std::numbers::pi * std::numbers::e, 2) * 0.36);
  CHECK(gaussian_entropy(cov) == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("config snapshot round trip") {
  for (const char* name : {"bench-timing", "nll", "fit", "denoise", "ood", "vae"}) {
    const ExperimentKind kind = parse_experiment(name);
    ExperimentConfig c = default_config(kind);
    c.seed = 123;
    apply_override(c, "optim.lr=0.0025");
    apply_override(c, "model.head_hidden=[8, 4]");
    apply_override(c, "data.offset=[0.1, -0.3]");
    const std::string text = to_toml(c);
    ExperimentConfig back = default_config(kind);
    apply_toml(back, text, "snapshot");
    CHECK(to_toml(back) == text);
    CHECK(back.seed == 123);
    CHECK(back.optim.lr == 0.0025);
    CHECK(back.model.head_hidden == std::vector<std::size_t>{8, 4});
  }
}

TEST_CASE("config errors") {
  ExperimentConfig c = default_config(ExperimentKind::kFit);
  CHECK_THROWS_AS(apply_toml(c, "[optim]\nlearning_rate = 0.1\n", "t"), ConfigError);
  CHECK_THROWS_AS(apply_toml(c, "[nonsense]\nx = 1\n", "t"), ConfigError);
  CHECK_THROWS_AS(apply_toml(c, "[optim]\nlr = \"fast\"\n", "t"), ConfigError);
  CHECK_THROWS_AS(apply_toml(c, "[optim\n", "t"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "optim.lr"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "optim.nope=1"), ConfigError);
  CHECK_THROWS_AS(parse_experiment("train"), InputError);
}

TEST_CASE("cli exit codes") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"train"}).code == 2);
  CHECK(cli({"fit", "--no-such-flag"}).code == 2);
  CHECK(cli({"fit", "--config", "/no/such/file.toml"}).code == 2);
  CHECK(cli({"fit", "--set", "optim.nope=1"}).code == 2);
  CHECK(cli({"sample"}).code == 2);  // --checkpoint is required
  CHECK(cli({"--help"}).code == 0);

  const fs::path dir = scratch("mismatch");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "c.toml");
    f << "experiment = \"ood\"\n";
  }
  const auto r = cli({"fit", "-c", (dir / "c.toml").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("ood") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("fit reruns from its snapshot byte for byte, and its checkpoint samples") {
  const fs::path first = scratch("fit_a");
  const fs::path second = scratch("fit_b");
  std::vector<std::string> args{"fit", "-o", first.string()};
  args.insert(args.end(), kSmallFit.begin(), kSmallFit.end());
  REQUIRE(cli(args).code == 0);
  REQUIRE(fs::exists(first / "config.toml"));
  REQUIRE(cli({"fit", "-c", (first / "config.toml").string(), "-o", second.string()}).code == 0);

  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(first)) {
    if (e.path().extension() != ".csv") continue;
    CHECK_MESSAGE(slurp(e.path()) == slurp(second / e.path().filename()), e.path().filename().string());
    ++compared;
  }
  CHECK(compared >= 5);

  const fs::path sampled = scratch("sample");
  const auto r = cli({"sample", "--checkpoint", (first / "model.bin").string(), "-n", "17", "-o", sampled.string(),
                      "--seed", "3"});
  REQUIRE(r.code == 0);
  const Batch s = read_matrix_csv(sampled / "samples.csv");
  CHECK(s.rows() == 17);
  CHECK(s.cols() == 2);
  CHECK(s.allFinite());

  for (const auto& p : {first, second, sampled}) fs::remove_all(p);
}

TEST_CASE("ood statistics on a small run") {
  ExperimentConfig c = default_config(ExperimentKind::kOod);
  c.write_outputs = false;
  c.data.n_train = 300;
  c.data.n_test = 200;
  c.ood.n_ood = 200;
  c.optim.max_iters = 50;
  const OodResult r = run_ood(c);
  CHECK(r.auroc_identical == 0.5);
  CHECK(r.h_in.size() == 200);
  CHECK(r.h_out.size() == 200);
  CHECK(r.auroc == auroc_pairwise(r.h_in, r.h_out));
}
