#include "lrcssm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "lrcssm/checkpoint.hpp"
#include "lrcssm/config.hpp"
#include "lrcssm/errors.hpp"
#include "lrcssm/scan.hpp"

namespace lrcssm::cli {
namespace {

namespace fs = std::filesystem;

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, double>)
      s += format_double(v[i]);
    else if constexpr (std::is_same_v<T, std::string>)
      s += v[i];
    else
      s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto end = std::min(value.find(',', start), value.size());
    auto item = value.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

std::vector<std::uint64_t> parse_u64_list(std::string_view key, std::string_view value) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(value)) out.push_back(parse_u64(key, item));
  if (out.empty()) throw ConfigError(std::string(key) + ": empty list");
  return out;
}

struct Key {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

Key model_key(std::string name, std::string help, std::function<std::string(const ModelConfig&)> get) {
  return {name, std::move(help),
          [name](RunConfig& rc, std::string_view v) { apply_model_key(rc.model, name, v); },
          [get = std::move(get)](const RunConfig& rc) { return get(rc.model); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto str = [](auto v) { return std::to_string(v); };
    k.push_back(model_key("model.input_dim", "input channels p (taken from the data when unset)",
                          [&](const ModelConfig& m) { return str(m.input_dim); }));
    k.push_back(model_key("model.hidden_dim", "encoder width H", [&](const ModelConfig& m) { return str(m.hidden_dim); }));
    k.push_back(model_key("model.state_dim", "LRC state size D", [&](const ModelConfig& m) { return str(m.state_dim); }));
    k.push_back(model_key("model.num_blocks", "number of blocks L", [&](const ModelConfig& m) { return str(m.num_blocks); }));
    k.push_back(model_key("model.num_classes", "classes C (taken from the data when unset)",
                          [&](const ModelConfig& m) { return str(m.num_classes); }));
    k.push_back(model_key("model.dt", "Euler step", [](const ModelConfig& m) { return format_double(m.dt); }));
    k.push_back(model_key("model.dependence_mode", "full | a_input_only | input_only",
                          [](const ModelConfig& m) { return std::string(to_string(m.dependence_mode)); }));
    k.push_back(model_key("model.rho_clamp", "none or rho in (0.5, 1) bounding the transition coefficients",
                          [](const ModelConfig& m) { return m.rho_clamp ? format_double(*m.rho_clamp) : "none"; }));
    k.push_back(model_key("model.pooling", "last | mean",
                          [](const ModelConfig& m) { return std::string(to_string(m.pooling)); }));
    k.push_back(model_key("model.seed", "parameter init seed", [&](const ModelConfig& m) { return str(m.seed); }));
    k.push_back(model_key("solver.mode", "sequential | newton_scan | elk_damped",
                          [](const ModelConfig& m) { return std::string(to_string(m.solver.mode)); }));
    k.push_back(model_key("solver.tol", "Newton stopping tolerance (evaluation)",
                          [](const ModelConfig& m) { return format_double(m.solver.tol); }));
    k.push_back(model_key("solver.max_iters", "Newton iteration cap", [&](const ModelConfig& m) { return str(m.solver.max_iters); }));
    k.push_back(model_key("solver.trust_ratio", "damping ratio of elk_damped",
                          [](const ModelConfig& m) { return format_double(m.solver.trust_ratio); }));

    k.push_back({"train.lr", "Adam learning rate",
                 [](RunConfig& rc, std::string_view v) { rc.train.lr = parse_double("train.lr", v); },
                 [](const RunConfig& rc) { return format_double(rc.train.lr); }});
    k.push_back({"train.batch_size", "mini-batch size",
                 [](RunConfig& rc, std::string_view v) { rc.train.batch_size = parse_size("train.batch_size", v); },
                 [&](const RunConfig& rc) { return str(rc.train.batch_size); }});
    k.push_back({"train.max_epochs", "epoch cap",
                 [](RunConfig& rc, std::string_view v) { rc.train.max_epochs = parse_size("train.max_epochs", v); },
                 [&](const RunConfig& rc) { return str(rc.train.max_epochs); }});
    k.push_back({"train.patience", "epochs without validation improvement before stopping",
                 [](RunConfig& rc, std::string_view v) { rc.train.patience = parse_size("train.patience", v); },
                 [&](const RunConfig& rc) { return str(rc.train.patience); }});
    k.push_back({"train.seed", "batch shuffling seed",
                 [](RunConfig& rc, std::string_view v) { rc.train.seed = parse_u64("train.seed", v); },
                 [&](const RunConfig& rc) { return str(rc.train.seed); }});
    k.push_back({"train.tol", "Newton tolerance while training",
                 [](RunConfig& rc, std::string_view v) { rc.train.train_tol = parse_double("train.tol", v); },
                 [](const RunConfig& rc) { return format_double(rc.train.train_tol); }});
    k.push_back({"train.time_budget_s", "stop after the epoch crossing this many seconds (0: no limit)",
                 [](RunConfig& rc, std::string_view v) { rc.train.time_budget_s = parse_double("train.time_budget_s", v); },
                 [](const RunConfig& rc) { return format_double(rc.train.time_budget_s); }});
    k.push_back({"train.grid.lr", "gridsearch learning rates",
                 [](RunConfig& rc, std::string_view v) { rc.train.grid.lr = parse_double_list("train.grid.lr", v); },
                 [](const RunConfig& rc) { return join(rc.train.grid.lr); }});
    k.push_back({"train.grid.hidden", "gridsearch encoder widths",
                 [](RunConfig& rc, std::string_view v) { rc.train.grid.hidden = parse_size_list("train.grid.hidden", v); },
                 [](const RunConfig& rc) { return join(rc.train.grid.hidden); }});
    k.push_back({"train.grid.state", "gridsearch state sizes",
                 [](RunConfig& rc, std::string_view v) { rc.train.grid.state = parse_size_list("train.grid.state", v); },
                 [](const RunConfig& rc) { return join(rc.train.grid.state); }});
    k.push_back({"train.grid.blocks", "gridsearch block counts",
                 [](RunConfig& rc, std::string_view v) { rc.train.grid.blocks = parse_size_list("train.grid.blocks", v); },
                 [](const RunConfig& rc) { return join(rc.train.grid.blocks); }});

    k.push_back({"data.path", "comma-separated .ts/.csv files, concatenated then split",
                 [](RunConfig& rc, std::string_view v) { rc.data.paths = split_list(v); },
                 [](const RunConfig& rc) { return join(rc.data.paths); }});
    k.push_back({"data.synth", "none | sign_of_sum | long_parity (used when data.path is empty)",
                 [](RunConfig& rc, std::string_view v) {
                   if (v == "none" || v.empty())
                     rc.data.synth.reset();
                   else
                     rc.data.synth = parse_synth_kind(v);
                 },
                 [](const RunConfig& rc) { return rc.data.synth ? std::string(to_string(*rc.data.synth)) : "none"; }});
    k.push_back({"data.synth_length", "synthetic sequence length",
                 [](RunConfig& rc, std::string_view v) { rc.data.synth_length = parse_size("data.synth_length", v); },
                 [&](const RunConfig& rc) { return str(rc.data.synth_length); }});
    k.push_back({"data.synth_channels", "synthetic channel count",
                 [](RunConfig& rc, std::string_view v) { rc.data.synth_channels = parse_size("data.synth_channels", v); },
                 [&](const RunConfig& rc) { return str(rc.data.synth_channels); }});
    k.push_back({"data.synth_samples", "synthetic sample count",
                 [](RunConfig& rc, std::string_view v) { rc.data.synth_samples = parse_size("data.synth_samples", v); },
                 [&](const RunConfig& rc) { return str(rc.data.synth_samples); }});
    k.push_back({"data.synth_seed", "synthetic generator seed",
                 [](RunConfig& rc, std::string_view v) { rc.data.synth_seed = parse_u64("data.synth_seed", v); },
                 [&](const RunConfig& rc) { return str(rc.data.synth_seed); }});
    k.push_back({"data.split_seed", "split seed used by train",
                 [](RunConfig& rc, std::string_view v) { rc.data.split_seed = parse_u64("data.split_seed", v); },
                 [&](const RunConfig& rc) { return str(rc.data.split_seed); }});
    k.push_back({"data.split_seeds", "split seeds used by eval and gridsearch",
                 [](RunConfig& rc, std::string_view v) { rc.data.split_seeds = parse_u64_list("data.split_seeds", v); },
                 [](const RunConfig& rc) { return join(rc.data.split_seeds); }});
    k.push_back({"data.train_frac", "training fraction",
                 [](RunConfig& rc, std::string_view v) { rc.data.fractions.train = parse_double("data.train_frac", v); },
                 [](const RunConfig& rc) { return format_double(rc.data.fractions.train); }});
    k.push_back({"data.val_frac", "validation fraction",
                 [](RunConfig& rc, std::string_view v) { rc.data.fractions.val = parse_double("data.val_frac", v); },
                 [](const RunConfig& rc) { return format_double(rc.data.fractions.val); }});
    k.push_back({"data.test_frac", "test fraction",
                 [](RunConfig& rc, std::string_view v) { rc.data.fractions.test = parse_double("data.test_frac", v); },
                 [](const RunConfig& rc) { return format_double(rc.data.fractions.test); }});

    k.push_back({"output.dir", "directory for checkpoints, metrics and tables",
                 [](RunConfig& rc, std::string_view v) { rc.output.dir = std::string(v); },
                 [](const RunConfig& rc) { return rc.output.dir; }});
    k.push_back({"output.record_wall_ms", "write epoch wall time into metrics (false: null)",
                 [](RunConfig& rc, std::string_view v) { rc.output.record_wall_ms = parse_bool("output.record_wall_ms", v); },
                 [](const RunConfig& rc) { return std::string(rc.output.record_wall_ms ? "true" : "false"); }});

    k.push_back({"bench.lengths", "sequence lengths timed by bench",
                 [](RunConfig& rc, std::string_view v) { rc.bench.lengths = parse_size_list("bench.lengths", v); },
                 [](const RunConfig& rc) { return join(rc.bench.lengths); }});
    k.push_back({"bench.threads", "thread counts timed by bench",
                 [](RunConfig& rc, std::string_view v) { rc.bench.threads = parse_size_list("bench.threads", v); },
                 [](const RunConfig& rc) { return join(rc.bench.threads); }});
    k.push_back({"bench.state_dim", "state size of the benchmarked layer",
                 [](RunConfig& rc, std::string_view v) { rc.bench.runtime.state_dim = parse_size("bench.state_dim", v); },
                 [&](const RunConfig& rc) { return str(rc.bench.runtime.state_dim); }});
    k.push_back({"bench.input_dim", "input width of the benchmarked layer",
                 [](RunConfig& rc, std::string_view v) { rc.bench.runtime.input_dim = parse_size("bench.input_dim", v); },
                 [&](const RunConfig& rc) { return str(rc.bench.runtime.input_dim); }});
    k.push_back({"bench.reps", "timed repetitions (best is kept)",
                 [](RunConfig& rc, std::string_view v) { rc.bench.runtime.reps = parse_size("bench.reps", v); },
                 [&](const RunConfig& rc) { return str(rc.bench.runtime.reps); }});
    k.push_back({"bench.seed", "parameter and input seed",
                 [](RunConfig& rc, std::string_view v) { rc.bench.runtime.seed = parse_u64("bench.seed", v); },
                 [&](const RunConfig& rc) { return str(rc.bench.runtime.seed); }});
    return k;
  }();
  return table;
}

void apply(RunConfig& rc, std::string_view key, std::string_view value) {
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(rc, value);
      rc.explicit_keys.insert(k.name);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

fs::path output_dir(const RunConfig& rc) {
  fs::path dir(rc.output.dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

/// Fills p and C from the data unless set explicitly, in which case they must agree.
void bind_data_shape(RunConfig& rc, const Dataset& ds) {
  auto bind = [&](const char* key, std::size_t& field, std::size_t actual) {
    if (rc.explicit_keys.count(key) && field != actual)
      throw ConfigError(std::string(key) + "=" + std::to_string(field) + " but the data has " + std::to_string(actual));
    field = actual;
  };
  bind("model.input_dim", rc.model.input_dim, ds.channels());
  bind("model.num_classes", rc.model.num_classes, ds.class_count());
}

std::string epoch_json(const EpochRecord& rec, bool wall) {
  if (wall) return to_json_line(rec);
  auto line = to_json_line(rec);
  const auto at = line.find("\"wall_ms\":");
  return line.substr(0, at) + "\"wall_ms\":null}";
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample standard deviation (n - 1); zero for a single value.
MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

int cmd_train(RunConfig rc, std::ostream& out) {
  const auto ds = load_data(rc.data);
  bind_data_shape(rc, ds);
  rc.validate();
  auto sp = split(ds, rc.data.split_seed, rc.data.fractions);
  normalize_split(sp);
  const auto dir = output_dir(rc);
  write_file(dir / "resolved_config.txt", resolved_config(rc));

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw Error("cannot write " + (dir / "metrics.jsonl").string());
  const auto result = train(rc.model, sp, rc.train, [&](const EpochRecord& rec) {
    const auto line = epoch_json(rec, rc.output.record_wall_ms);
    metrics << line << '\n';
    metrics.flush();
    out << line << '\n';
  });
  save_checkpoint(dir / "checkpoint.bin", rc.model, result.best);

  const auto& h = result.history;
  const double test_acc = accuracy(result.best, rc.model, sp.test);
  std::ostringstream summary;
  summary << "{\"best_epoch\":" << h.best_epoch << ",\"best_val_acc\":" << format_double(h.best_val_acc)
          << ",\"test_acc\":" << format_double(test_acc) << ",\"epochs\":" << h.epochs.size()
          << ",\"early_stopped\":" << (h.early_stopped ? "true" : "false")
          << ",\"out_of_time\":" << (h.out_of_time ? "true" : "false")
          << ",\"diverged\":" << (h.diverged ? "true" : "false") << "}\n";
  write_file(dir / "summary.json", summary.str());
  out << "test accuracy " << fixed(test_acc) << " (best epoch " << h.best_epoch << ", val " << fixed(h.best_val_acc)
      << ")\n";
  if (h.diverged) {
    out << "training diverged\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_eval(RunConfig rc, const std::string& checkpoint, std::ostream& out) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto ds = load_data(rc.data);
  if (ds.channels() != ckpt.config.input_dim || ds.class_count() != ckpt.config.num_classes)
    throw DataError("data shape (p=" + std::to_string(ds.channels()) + ", C=" + std::to_string(ds.class_count()) +
                    ") does not match the checkpoint");
  rc.model = ckpt.config;
  std::vector<double> accs;
  for (auto seed : rc.data.split_seeds) {
    auto sp = split(ds, seed, rc.data.fractions);
    normalize_split(sp);
    accs.push_back(accuracy(ckpt.params, rc.model, sp.test));
    out << "{\"split_seed\":" << seed << ",\"test_acc\":" << format_double(accs.back()) << "}\n";
  }
  const auto ms = mean_std(accs);
  out << "test accuracy " << fixed(ms.mean) << " +- " << fixed(ms.std) << " over " << accs.size() << " splits\n";
  return kExitOk;
}

int cmd_gridsearch(RunConfig rc, std::ostream& out) {
  const auto ds = load_data(rc.data);
  bind_data_shape(rc, ds);
  rc.validate();
  const auto dir = output_dir(rc);
  write_file(dir / "resolved_config.txt", resolved_config(rc));
  std::ofstream table(dir / "grid.jsonl", std::ios::binary);
  auto row_json = [](const GridRow& r) {
    std::ostringstream s;
    s << "{\"lr\":" << format_double(r.point.lr) << ",\"hidden\":" << r.point.hidden << ",\"state\":" << r.point.state
      << ",\"blocks\":" << r.point.blocks << ",\"val_accs\":[";
    for (std::size_t i = 0; i < r.val_accs.size(); ++i) s << (i ? "," : "") << format_double(r.val_accs[i]);
    s << "],\"mean_val_acc\":" << format_double(r.mean_val_acc) << ",\"params\":" << r.param_count << "}";
    return s.str();
  };
  const auto res = grid_search(ds, rc.model, rc.train, rc.data.split_seeds, rc.data.fractions, [&](const GridRow& r) {
    const auto line = row_json(r);
    table << line << '\n';
    table.flush();
    out << line << '\n';
  });
  out << "best lr=" << format_double(res.best.lr) << " hidden=" << res.best.hidden << " state=" << res.best.state
      << " blocks=" << res.best.blocks << '\n';
  return kExitOk;
}

int cmd_bench(const RunConfig& rc, std::ostream& out) {
  rc.validate();
  std::vector<int> threads;
  for (auto t : rc.bench.threads) threads.push_back(static_cast<int>(t));
  const auto rows = runtime_scaling(rc.bench.lengths, threads, rc.bench.runtime);
  const auto dir = output_dir(rc);
  const auto csv = runtime_csv(rows);
  write_file(dir / "bench.csv", csv);
  write_file(dir / "bench.jsonl", runtime_jsonl(rows));
  out << csv;
  bool rounds_ok = true;
  for (const auto& r : rows) rounds_ok = rounds_ok && r.max_scan_rounds <= r.round_bound && r.converged;
  return rounds_ok ? kExitOk : kExitRuntime;
}

int cmd_verify(const SuiteOptions& opts, const std::string& json_path, std::ostream& out) {
  std::ostringstream lines;
  const auto reports = run_suites(opts, lines);
  out << lines.str();
  if (!json_path.empty()) write_file(json_path, lines.str());
  std::size_t failed = 0;
  for (const auto& r : reports) failed += !r.passed;
  out << (failed ? "FAILED " : "ok ") << reports.size() - failed << "/" << reports.size() << " checks passed\n";
  return failed ? kExitRuntime : kExitOk;
}

int cmd_synth(SynthKind kind, std::size_t length, std::size_t channels, std::size_t samples, std::uint64_t seed,
              const std::string& path, std::ostream& out) {
  auto ds = synth_task(kind, length, channels, samples, seed);
  ds.name = std::string(to_string(kind));
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_ts(ds, p);
  out << "wrote " << ds.size() << " sequences to " << path << '\n';
  return kExitOk;
}

void apply_threads(int cli_threads) {
  int n = cli_threads;
  if (n <= 0) {
    if (const char* env = std::getenv("LRC_THREADS"); env && *env) {
      n = static_cast<int>(parse_size("LRC_THREADS", env));
      if (n == 0) throw ConfigError("LRC_THREADS must be positive");
    }
  }
  if (n > 0) set_num_threads(n);
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (output.dir.empty()) throw ConfigError("output.dir must not be empty");
  if (bench.lengths.empty() || bench.threads.empty()) throw ConfigError("bench.lengths and bench.threads must not be empty");
  for (auto t : bench.lengths)
    if (t == 0) throw ConfigError("bench.lengths entries must be positive");
  for (auto t : bench.threads)
    if (t == 0) throw ConfigError("bench.threads entries must be positive");
  if (bench.runtime.reps == 0 || bench.runtime.state_dim == 0 || bench.runtime.input_dim == 0)
    throw ConfigError("bench.reps, bench.state_dim and bench.input_dim must be positive");
}

RunConfig parse_run_config(std::string_view text, const std::vector<std::string>& overrides) {
  RunConfig rc;
  for (const auto& e : parse_key_values(text)) {
    try {
      apply(rc, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    auto key = std::string_view(o).substr(0, eq);
    auto value = std::string_view(o).substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.remove_suffix(1);
    while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    apply(rc, key, value);
  }
  return rc;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  return parse_run_config(read_file(path), overrides);
}

std::string resolved_config(const RunConfig& rc) {
  std::string s;
  for (const auto& k : keys()) s += k.name + "=" + k.get(rc) + "\n";
  return s;
}

std::string key_reference() {
  const RunConfig defaults;
  std::size_t width = 0;
  for (const auto& k : keys()) width = std::max(width, k.name.size());
  std::string s = "Config keys (key=value lines; --set key=value overrides):\n";
  for (const auto& k : keys()) {
    s += "  " + k.name + std::string(width + 2 - k.name.size(), ' ') + k.help + " [" + k.get(defaults) + "]\n";
  }
  return s;
}

Dataset load_data(const DataConfig& data) {
  if (data.paths.empty()) {
    if (!data.synth) throw ConfigError("set data.path or data.synth");
    auto ds = synth_task(*data.synth, data.synth_length, data.synth_channels, data.synth_samples, data.synth_seed);
    ds.name = std::string(to_string(*data.synth));
    return ds;
  }
  Dataset all = load_dataset(data.paths.front());
  for (std::size_t f = 1; f < data.paths.size(); ++f) {
    const auto more = load_dataset(data.paths[f]);
    if (more.size() && all.size() && (more.length() != all.length() || more.channels() != all.channels()))
      throw DataError(data.paths[f] + ": shape differs from " + data.paths.front());
    std::map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < all.class_names.size(); ++c) index[all.class_names[c]] = c;
    for (std::size_t k = 0; k < more.size(); ++k) {
      const auto& name = more.class_names[more.labels[k]];
      auto it = index.find(name);
      if (it == index.end()) {
        it = index.emplace(name, all.class_names.size()).first;
        all.class_names.push_back(name);
      }
      all.sequences.push_back(more.sequences[k]);
      all.labels.push_back(it->second);
    }
  }
  all.validate();
  return all;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LrcSSM: parallel-in-time nonlinear state-space sequence classifier"};
  app.require_subcommand(1);
  app.footer(key_reference());
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (fallback: LRC_THREADS)")->check(CLI::PositiveNumber);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("-c,--config", config_path, "key=value config file");
    if (required) opt->required();
    sub->add_option("-s,--set", overrides, "override, key=value (repeatable)");
    sub->footer(key_reference());
  };

  auto* train_cmd = app.add_subcommand("train", "train a model, write checkpoint, metrics and resolved config");
  add_config(train_cmd, true);

  auto* eval_cmd = app.add_subcommand("eval", "test accuracy of a checkpoint, mean +- std over data.split_seeds");
  std::string checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  add_config(eval_cmd, true);

  auto* grid_cmd = app.add_subcommand("gridsearch", "train every train.grid.* point on each split seed");
  add_config(grid_cmd, true);

  auto* bench_cmd = app.add_subcommand("bench", "time sequential rollout against the parallel solver");
  add_config(bench_cmd, false);

  auto* verify_cmd = app.add_subcommand("verify", "run the stability, solver and gradient checks");
  SuiteOptions suite;
  std::string fixture, json_path;
  verify_cmd->add_option("--suite", suite.suite, "all | stability | solver | gradients")
      ->check(CLI::IsMember({"all", "stability", "solver", "gradients"}));
  verify_cmd->add_option("--fixture", fixture, "unstable: inject an expanding coefficient fixture")
      ->check(CLI::IsMember({"unstable"}));
  verify_cmd->add_option("--seed", suite.seed, "sampling seed");
  verify_cmd->add_option("--json", json_path, "also write the check records to this file");

  auto* synth_cmd = app.add_subcommand("synth-gen", "write a synthetic task as a .ts file");
  std::string kind_name = "sign_of_sum", synth_out;
  std::size_t length = 1000, channels = 2, samples = 2000;
  std::uint64_t seed = 1;
  synth_cmd->add_option("--kind", kind_name, "sign_of_sum | long_parity")
      ->check(CLI::IsMember({"sign_of_sum", "long_parity"}));
  synth_cmd->add_option("--length", length, "sequence length T");
  synth_cmd->add_option("--channels", channels, "channels p");
  synth_cmd->add_option("--samples", samples, "number of sequences");
  synth_cmd->add_option("--seed", seed, "generator seed");
  synth_cmd->add_option("--out", synth_out, "output .ts path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    apply_threads(threads);
    auto config = [&]() {
      return config_path.empty() ? parse_run_config("", overrides) : load_run_config(config_path, overrides);
    };
    if (*train_cmd) return cmd_train(config(), out);
    if (*eval_cmd) return cmd_eval(config(), checkpoint, out);
    if (*grid_cmd) return cmd_gridsearch(config(), out);
    if (*bench_cmd) return cmd_bench(config(), out);
    if (*verify_cmd) {
      suite.unstable_fixture = fixture == "unstable";
      return cmd_verify(suite, json_path, out);
    }
    if (*synth_cmd) return cmd_synth(parse_synth_kind(kind_name), length, channels, samples, seed, synth_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace lrcssm::cli
