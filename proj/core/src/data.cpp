#include "lrcssm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "lrcssm/errors.hpp"

namespace lrcssm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool to_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    f(trim(text.substr(start, end - start)), line_no);
    start = end + 1;
  }
}

std::string location(std::string_view source, std::size_t) { return std::string(source) + ": "; }

}  // namespace

void Dataset::validate() const {
  if (labels.size() != sequences.size()) throw DataError("dataset has " + std::to_string(sequences.size()) +
                                                         " sequences but " + std::to_string(labels.size()) + " labels");
  for (std::size_t k = 0; k < sequences.size(); ++k) {
    if (sequences[k].rows() != length() || sequences[k].cols() != channels())
      throw DataError("sequence " + std::to_string(k) + " has shape " + std::to_string(sequences[k].rows()) + "x" +
                      std::to_string(sequences[k].cols()) + ", expected " + std::to_string(length()) + "x" +
                      std::to_string(channels()));
    if (labels[k] >= class_count())
      throw DataError("label " + std::to_string(labels[k]) + " of sequence " + std::to_string(k) +
                      " is outside [0, " + std::to_string(class_count()) + ")");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.class_names = class_names;
  out.stats = stats;
  out.sequences.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto k : indices) {
    if (k >= size()) throw DataError("subset index out of range");
    out.sequences.push_back(sequences[k]);
    out.labels.push_back(labels[k]);
  }
  return out;
}

Dataset parse_ts(std::string_view text, std::string_view source) {
  Dataset ds;
  bool in_data = false;
  bool have_labels = false;
  std::map<std::string, std::size_t, std::less<>> label_index;

  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty() || line.front() == '#') return;
    if (!in_data) {
      if (line.front() != '@') throw ParseError(location(source, line_no) + "expected a directive before @data", line_no);
      const auto space = line.find_first_of(" \t");
      const std::string directive = lower(line.substr(1, space == std::string_view::npos ? line.size() - 1 : space - 1));
      const std::string_view rest = space == std::string_view::npos ? std::string_view{} : trim(line.substr(space));
      if (directive == "data") {
        in_data = true;
      } else if (directive == "problemname") {
        ds.name = std::string(rest);
      } else if (directive == "classlabel") {
        std::istringstream words{std::string(rest)};
        std::string flag;
        words >> flag;
        if (lower(flag) != "true") throw ParseError(location(source, line_no) + "only classification files are supported", line_no);
        for (std::string w; words >> w;) {
          if (label_index.count(w)) continue;
          label_index.emplace(w, ds.class_names.size());
          ds.class_names.push_back(w);
        }
        have_labels = true;
      } else if (directive == "equallength") {
        if (lower(rest) == "false") throw ParseError(location(source, line_no) + "variable-length series are not supported", line_no);
      } else if (directive == "timestamps") {
        if (lower(rest) == "true") throw ParseError(location(source, line_no) + "timestamped series are not supported", line_no);
      } else if (directive == "univariate" || directive == "dimensions" || directive == "serieslength" ||
                 directive == "missing") {
      } else {
        std::cerr << "warning: " << location(source, line_no) << "ignoring directive @" << directive << "\n";
      }
      return;
    }

    const auto fields = split_on(line, ':');
    if (fields.size() < 2)
      throw ParseError(location(source, line_no) + "expected dimensions separated by ':' followed by a label", line_no);
    const std::string label(trim(fields.back()));
    if (label.empty()) throw ParseError(location(source, line_no) + "missing class label", line_no);
    auto it = label_index.find(label);
    if (it == label_index.end()) {
      if (have_labels) throw ParseError(location(source, line_no) + "label '" + label + "' not declared in @classLabel", line_no);
      it = label_index.emplace(label, ds.class_names.size()).first;
      ds.class_names.push_back(label);
    }

    const std::size_t p = fields.size() - 1;
    std::vector<std::vector<double>> dims(p);
    for (std::size_t d = 0; d < p; ++d) {
      for (auto v : split_on(fields[d], ',')) {
        double x = 0.0;
        if (trim(v) == "?") throw ParseError(location(source, line_no) + "missing values are not supported", line_no);
        if (!to_double(v, x)) throw ParseError(location(source, line_no) + "bad number '" + std::string(trim(v)) + "'", line_no);
        dims[d].push_back(x);
      }
      if (dims[d].size() != dims[0].size())
        throw ParseError(location(source, line_no) + "dimension " + std::to_string(d) + " has " +
                             std::to_string(dims[d].size()) + " values, dimension 0 has " + std::to_string(dims[0].size()),
                         line_no);
    }
    Matrix seq(dims[0].size(), p);
    for (std::size_t d = 0; d < p; ++d)
      for (std::size_t t = 0; t < dims[d].size(); ++t) seq(t, d) = dims[d][t];
    ds.sequences.push_back(std::move(seq));
    ds.labels.push_back(it->second);
  });
  if (!in_data) throw ParseError(std::string(source) + ": no @data section", 0);
  ds.validate();
  return ds;
}

Dataset load_ts(const std::filesystem::path& path) {
  Dataset ds = parse_ts(read_file(path), path.string());
  if (ds.name.empty()) ds.name = path.stem().string();
  return ds;
}

std::string format_ts(const Dataset& ds) {
  std::ostringstream out;
  out.precision(17);
  out << "@problemName " << (ds.name.empty() ? "dataset" : ds.name) << "\n";
  out << "@timeStamps false\n@missing false\n";
  out << "@univariate " << (ds.channels() == 1 ? "true" : "false") << "\n";
  out << "@dimensions " << ds.channels() << "\n@equalLength true\n@seriesLength " << ds.length() << "\n";
  out << "@classLabel true";
  for (const auto& c : ds.class_names) out << ' ' << c;
  out << "\n@data\n";
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const Matrix& s = ds.sequences[k];
    for (std::size_t d = 0; d < s.cols(); ++d) {
      for (std::size_t t = 0; t < s.rows(); ++t) out << (t ? "," : "") << s(t, d);
      out << ':';
    }
    out << ds.class_names.at(ds.labels[k]) << "\n";
  }
  return out.str();
}

void write_ts(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  for (const auto& c : ds.class_names)
    if (c.empty() || c.find_first_of(" \t:,\n") != std::string::npos)
      throw DataError("class name '" + c + "' cannot be written to a .ts file");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_ts(ds);
  if (!out) throw DataError("write failed: " + path.string());
}

Dataset parse_csv(std::string_view text, std::string_view source) {
  struct Row {
    double time;
    std::vector<double> values;
    std::string label;
    std::size_t line;
  };
  std::map<std::string, std::vector<Row>> by_id;
  std::vector<std::string> id_order;
  std::size_t channels = 0;
  bool first = true;

  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty() || line.front() == '#') return;
    const auto fields = split_on(line, ',');
    double time = 0.0;
    if (first) {
      first = false;
      if (fields.size() >= 2 && !to_double(fields[1], time)) return;  // header row
    }
    if (fields.size() < 4)
      throw ParseError(location(source, line_no) + "expected id,time,channels...,label", line_no);
    if (channels == 0) channels = fields.size() - 3;
    if (fields.size() - 3 != channels)
      throw ParseError(location(source, line_no) + "expected " + std::to_string(channels) + " channels", line_no);
    Row row;
    if (!to_double(fields[1], row.time)) throw ParseError(location(source, line_no) + "bad time value", line_no);
    for (std::size_t c = 0; c < channels; ++c) {
      double v = 0.0;
      if (!to_double(fields[2 + c], v))
        throw ParseError(location(source, line_no) + "bad number '" + std::string(trim(fields[2 + c])) + "'", line_no);
      row.values.push_back(v);
    }
    row.label = std::string(trim(fields.back()));
    row.line = line_no;
    const std::string id(trim(fields[0]));
    auto [it, inserted] = by_id.try_emplace(id);
    if (inserted) id_order.push_back(id);
    it->second.push_back(std::move(row));
  });

  Dataset ds;
  std::vector<std::string> seq_labels;
  for (const auto& id : id_order) {
    auto& rows = by_id[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
    Matrix seq(rows.size(), channels);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].label != rows[0].label)
        throw ParseError(location(source, rows[t].line) + "label changes within sequence '" + id + "'", rows[t].line);
      std::copy(rows[t].values.begin(), rows[t].values.end(), seq.row(t).begin());
    }
    ds.sequences.push_back(std::move(seq));
    seq_labels.push_back(rows[0].label);
  }
  ds.class_names = seq_labels;
  std::sort(ds.class_names.begin(), ds.class_names.end());
  ds.class_names.erase(std::unique(ds.class_names.begin(), ds.class_names.end()), ds.class_names.end());
  for (const auto& l : seq_labels)
    ds.labels.push_back(static_cast<std::size_t>(
        std::lower_bound(ds.class_names.begin(), ds.class_names.end(), l) - ds.class_names.begin()));
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  Dataset ds = parse_csv(read_file(path), path.string());
  ds.name = path.stem().string();
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".ts") return load_ts(path);
  if (ext == ".csv") return load_csv(path);
  throw DataError("unsupported dataset extension '" + ext + "' (expected .ts or .csv)");
}

DatasetSplit split(const Dataset& ds, std::uint64_t seed, SplitFractions f) {
  const double fr[3] = {f.train, f.val, f.test};
  for (double v : fr)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("split fractions must be non-negative");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  const std::size_t n = ds.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with our own index draw so the order is portable.
  for (std::size_t k = n; k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng() % k);
    std::swap(perm[k - 1], perm[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
  const std::size_t counts[3] = {n_train, n_val, n - n_train - n_val};
  const char* names[3] = {"train", "val", "test"};
  for (int k = 0; k < 3; ++k)
    if (fr[k] > 0.0 && counts[k] == 0)
      throw ConfigError(std::string(names[k]) + " partition is empty (" + std::to_string(n) + " sequences)");

  const std::span<const std::size_t> all(perm);
  DatasetSplit out;
  out.train = ds.subset(all.subspan(0, n_train));
  out.val = ds.subset(all.subspan(n_train, n_val));
  out.test = ds.subset(all.subspan(n_train + n_val));
  return out;
}

ChannelStats fit_channel_stats(const Dataset& train) {
  const std::size_t p = train.channels();
  ChannelStats st{Vector(p, 0.0), Vector(p, 0.0)};
  double count = 0.0;
  for (const auto& s : train.sequences) {
    for (std::size_t t = 0; t < s.rows(); ++t)
      for (std::size_t c = 0; c < p; ++c) st.mean[c] += s(t, c);
    count += static_cast<double>(s.rows());
  }
  if (count == 0.0) {
    std::fill(st.stddev.begin(), st.stddev.end(), 1.0);
    return st;
  }
  for (auto& m : st.mean) m /= count;
  for (const auto& s : train.sequences)
    for (std::size_t t = 0; t < s.rows(); ++t)
      for (std::size_t c = 0; c < p; ++c) {
        const double d = s(t, c) - st.mean[c];
        st.stddev[c] += d * d;
      }
  for (auto& v : st.stddev) v = std::sqrt(v / count);
  return st;
}

Matrix normalize(const ChannelStats& stats, const Matrix& seq) {
  if (stats.mean.size() != seq.cols() || stats.stddev.size() != seq.cols())
    throw DataError("normalize: channel count mismatch");
  Matrix out(seq.rows(), seq.cols());
  for (std::size_t t = 0; t < seq.rows(); ++t)
    for (std::size_t c = 0; c < seq.cols(); ++c)
      out(t, c) = (seq(t, c) - stats.mean[c]) / std::max(stats.stddev[c], kStdFloor);
  return out;
}

void normalize_split(DatasetSplit& sp) {
  const ChannelStats st = fit_channel_stats(sp.train);
  for (Dataset* part : {&sp.train, &sp.val, &sp.test}) {
    for (auto& s : part->sequences) s = normalize(st, s);
    part->stats = st;
  }
}

SynthKind parse_synth_kind(std::string_view text) {
  if (text == "sign_of_sum") return SynthKind::sign_of_sum;
  if (text == "long_parity") return SynthKind::long_parity;
  throw ConfigError("unknown synthetic task '" + std::string(text) + "' (expected sign_of_sum or long_parity)");
}

std::string_view to_string(SynthKind kind) {
  return kind == SynthKind::sign_of_sum ? "sign_of_sum" : "long_parity";
}

Dataset synth_task(SynthKind kind, std::size_t T, std::size_t p, std::size_t n, std::uint64_t seed) {
  if (T < 8) throw ConfigError("synthetic tasks need length >= 8");
  if (kind == SynthKind::sign_of_sum && p < 2) throw ConfigError("sign_of_sum needs at least 2 channels");
  if (p < 1) throw ConfigError("synthetic tasks need at least 1 channel");

  Dataset ds;
  ds.name = std::string(to_string(kind));
  ds.class_names = {"0", "1"};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t window = T / 4;

  for (std::size_t k = 0; k < n; ++k) {
    Matrix s(T, p);
    std::size_t label = 0;
    if (kind == SynthKind::sign_of_sum) {
      double sum = 0.0;
      for (std::size_t t = 0; t < window; ++t) {
        s(t, 0) = normal(rng);
        s(t, 1) = 1.0;
        sum += s(t, 0);
      }
      label = sum > 0.0 ? 1 : 0;
      for (std::size_t c = 2; c < p; ++c)
        for (std::size_t t = 0; t < T; ++t) s(t, c) = normal(rng);
    } else {
      const std::size_t half = T / 2;
      // balanced labels: odd -> one spike, even -> none or two
      const bool odd = rng() % 2 == 1;
      const std::size_t spikes = odd ? 1 : 2 * static_cast<std::size_t>(rng() % 2);
      if (spikes == 1) {
        s(static_cast<std::size_t>(rng() % T), 0) = 1.0;
      } else if (spikes == 2) {
        // first in [0, T - half), second at least `half` later
        const std::size_t a = static_cast<std::size_t>(rng() % (T - half));
        const std::size_t b = a + half + static_cast<std::size_t>(rng() % (T - half - a));
        s(a, 0) = 1.0;
        s(b, 0) = 1.0;
      }
      label = spikes % 2;
      for (std::size_t c = 1; c < p; ++c)
        for (std::size_t t = 0; t < T; ++t) s(t, c) = normal(rng);
    }
    ds.sequences.push_back(std::move(s));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace lrcssm
