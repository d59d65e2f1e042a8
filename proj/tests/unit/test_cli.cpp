#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lrcssm/checkpoint.hpp"
#include "lrcssm/cli.hpp"
#include "lrcssm/errors.hpp"

using namespace lrcssm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lrcssm_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto path = dir / "run.cfg";
  std::ofstream(path) << text;
  return path;
}

const std::string kQuickstart =
    "data.synth = sign_of_sum\n"
    "data.synth_length = 16\n"
    "data.synth_samples = 80\n"
    "model.hidden_dim = 4\n"
    "model.state_dim = 4\n"
    "model.num_blocks = 1\n"
    "train.max_epochs = 3\n"
    "train.batch_size = 16\n"
    "output.record_wall_ms = false\n";

}  // namespace

TEST_CASE("config errors exit with 2") {
  CHECK(run({"train", "--config", "/nonexistent/run.cfg"}).code == cli::kExitConfig);
  const auto dir = scratch("config");
  const auto cfg = write_config(dir, "model.bogus = 1\n");
  const auto r = run({"train", "--config", cfg.string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("model.bogus") != std::string::npos);
  CHECK(run({"train", "--config", write_config(dir, "train.lr = -1\ndata.synth=sign_of_sum\n").string()}).code ==
        cli::kExitConfig);
  CHECK(run({"frobnicate"}).code == cli::kExitConfig);
  CHECK_THROWS_AS(cli::parse_run_config("", {"no_equals"}), ConfigError);
}

TEST_CASE("data errors exit with 3") {
  const auto dir = scratch("data");
  std::ofstream(dir / "bad.ts") << "@classLabel true a\n@data\n1,2:zz\n";
  const auto cfg = write_config(dir, "data.path = " + (dir / "bad.ts").string() + "\noutput.dir = " + dir.string() + "\n");
  CHECK(run({"train", "--config", cfg.string()}).code == cli::kExitData);
  const auto missing = write_config(dir, "data.path = " + (dir / "none.ts").string() + "\n");
  CHECK(run({"train", "--config", missing.string()}).code == cli::kExitData);
}

TEST_CASE("help documents every key") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  const auto resolved = cli::resolved_config(cli::RunConfig{});
  std::istringstream lines(resolved);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto key = line.substr(0, line.find('='));
    CHECK_MESSAGE(r.out.find(key) != std::string::npos, key);
    ++n;
  }
  CHECK(n > 30);
}

TEST_CASE("resolved config parses back to itself") {
  auto rc = cli::parse_run_config(kQuickstart, {"model.rho_clamp=0.9", "data.split_seeds = 3,4"});
  const auto text = cli::resolved_config(rc);
  CHECK(cli::resolved_config(cli::parse_run_config(text)) == text);
  CHECK(rc.data.split_seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(rc.model.rho_clamp == 0.9);
}

TEST_CASE("synth-gen output loads back") {
  const auto dir = scratch("synth");
  const auto path = dir / "task.ts";
  const auto r = run({"synth-gen", "--kind", "long_parity", "--length", "32", "--channels", "2", "--samples", "20",
                      "--seed", "4", "--out", path.string()});
  REQUIRE(r.code == 0);
  const auto back = load_ts(path);
  const auto want = synth_task(SynthKind::long_parity, 32, 2, 20, 4);
  CHECK(back.labels == want.labels);
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(back.sequences[k] == want.sequences[k]);
}

TEST_CASE("train writes its artifacts and reruns byte-identically") {
  const auto a = scratch("train_a");
  const auto b = scratch("train_b");
  const auto cfg = write_config(a, kQuickstart);
  const auto ra = run({"train", "--config", cfg.string(), "--set", "output.dir=" + a.string()});
  const auto rb = run({"--threads", "2", "train", "--config", cfg.string(), "--set", "output.dir=" + b.string()});
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  for (const char* f : {"checkpoint.bin", "metrics.jsonl", "resolved_config.txt", "summary.json"}) {
    CHECK(fs::exists(a / f));
  }
  const auto metrics = slurp(a / "metrics.jsonl");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);
  CHECK(metrics.find("\"wall_ms\":null") != std::string::npos);
  CHECK(metrics == slurp(b / "metrics.jsonl"));
  CHECK(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));
  const auto ckpt = load_checkpoint(a / "checkpoint.bin");
  CHECK(ckpt.config.input_dim == 2);
  CHECK(ckpt.config.num_classes == 2);
  CHECK(slurp(a / "resolved_config.txt").find("model.input_dim=2\n") != std::string::npos);
}

TEST_CASE("eval of an untrained model is near chance") {
  const auto dir = scratch("eval");
  ModelConfig mc;
  mc.input_dim = 2;
  mc.hidden_dim = 4;
  mc.state_dim = 4;
  mc.num_blocks = 1;
  mc.solver.mode = SolverMode::sequential;
  save_checkpoint(dir / "untrained.bin", mc, init_params(mc));
  const auto cfg = write_config(dir, "data.synth = sign_of_sum\ndata.synth_length = 16\ndata.synth_samples = 2000\n");
  const auto r = run({"eval", "--checkpoint", (dir / "untrained.bin").string(), "--config", cfg.string()});
  REQUIRE(r.code == 0);
  const auto at = r.out.find("test accuracy ");
  REQUIRE(at != std::string::npos);
  const double mean = std::stod(r.out.substr(at + 14));
  CHECK(mean > 0.35);
  CHECK(mean < 0.65);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 6);  // 5 seeds + summary

  const auto wide = write_config(dir, "data.synth = sign_of_sum\ndata.synth_channels = 3\n");
  CHECK(run({"eval", "--checkpoint", (dir / "untrained.bin").string(), "--config", wide.string()}).code ==
        cli::kExitData);
}

TEST_CASE("gridsearch with one point echoes it") {
  const auto dir = scratch("grid");
  const auto cfg = write_config(dir, kQuickstart +
                                         "train.grid.lr = 0.01\ntrain.grid.hidden = 4\ntrain.grid.state = 3\n"
                                         "train.grid.blocks = 1\ndata.split_seeds = 1,2\ntrain.max_epochs = 1\n"
                                         "output.dir = " + dir.string() + "\n");
  // train.max_epochs appears twice
  CHECK(run({"gridsearch", "--config", cfg.string()}).code == cli::kExitConfig);
  const auto ok = write_config(dir, kQuickstart +
                                        "train.grid.lr = 0.01\ntrain.grid.hidden = 4\ntrain.grid.state = 3\n"
                                        "train.grid.blocks = 1\ndata.split_seeds = 1,2\n"
                                        "output.dir = " + dir.string() + "\n");
  const auto r = run({"gridsearch", "--config", ok.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("best lr=0.01 hidden=4 state=3 blocks=1") != std::string::npos);
  const auto table = slurp(dir / "grid.jsonl");
  CHECK(std::count(table.begin(), table.end(), '\n') == 1);
}

TEST_CASE("bench writes csv and jsonl") {
  const auto dir = scratch("bench");
  const auto r = run({"bench", "--set", "bench.lengths=16,64", "--set", "bench.reps=1", "--set",
                      "output.dir=" + dir.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "bench.csv").rfind("length,threads,", 0) == 0);
  const auto jsonl = slurp(dir / "bench.jsonl");
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 2);
}

TEST_CASE("verify suites and the unstable fixture") {
  const auto stab = run({"verify", "--suite", "stability"});
  CHECK(stab.code == 0);
  CHECK(stab.out.find("contraction_default_init") != std::string::npos);
  CHECK(stab.out.find("newton_matches_rollout") == std::string::npos);

  const auto bad = run({"verify", "--suite", "stability", "--fixture", "unstable"});
  CHECK(bad.code != 0);
  CHECK(bad.out.find("\"check\":\"contraction_unstable_fixture\",\"passed\":false") != std::string::npos);

  const auto solver = run({"verify", "--suite", "solver"});
  CHECK(solver.code == 0);
  CHECK(solver.out.find("contraction") == std::string::npos);

  const auto grads = run({"verify", "--suite", "gradients"});
  CHECK(grads.code == 0);
  CHECK(run({"verify", "--suite", "everything"}).code == cli::kExitConfig);
}

TEST_CASE("the executable reports exit codes") {
  const std::string exe = LRCSSM_CLI_PATH;
  CHECK(std::system((exe + " --help > /dev/null").c_str()) == 0);
  const int missing = std::system((exe + " train --config /nonexistent.cfg 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(missing) == cli::kExitConfig);
  const int threads = std::system(("LRC_THREADS=abc " + exe + " verify --suite gradients > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(threads) == cli::kExitConfig);
}
