#include "coper/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace coper {
namespace {

// Stratified 70/15/15 split; validation and test each get at least one
// sample of every class that has three or more members.
DatasetSplit stratified_split(std::vector<Sample> samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eed5b1175ULL);
  DatasetSplit out;
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      if (samples[s].label == label) idx.push_back(s);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t c = idx.size();
    std::size_t val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(c)));
    std::size_t test = val;
    if (c >= 3) {
      val = std::max<std::size_t>(val, 1);
      test = std::max<std::size_t>(test, 1);
    }
    const std::size_t train = c - std::min(c, val + test);
    for (std::size_t k = 0; k < c; ++k) {
      Sample& s = samples[idx[k]];
      if (k < train) {
        out.train.push_back(std::move(s));
      } else if (k < train + val) {
        out.validation.push_back(std::move(s));
      } else {
        out.test.push_back(std::move(s));
      }
    }
  }
  for (auto* split : {&out.train, &out.validation, &out.test}) {
    std::shuffle(split->begin(), split->end(), rng);
  }
  return out;
}

void require_regular(const Sample& s) {
  if (!std::all_of(s.present.begin(), s.present.end(), [](std::uint8_t p) { return p != 0; })) {
    throw std::invalid_argument("apply_removal: sample " + s.id + " is not fully regular");
  }
}

}  // namespace

double prevalence(const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  const auto pos = std::count_if(samples.begin(), samples.end(),
                                 [](const Sample& s) { return s.label == 1; });
  return static_cast<double>(pos) / static_cast<double>(samples.size());
}

// ---- synthetic -----------------------------------------------------------------

DatasetSplit generate_synthetic(const SyntheticOptions& o) {
  if (o.samples < 10) throw std::invalid_argument("synthetic data needs at least 10 samples");
  if (o.features < 2) throw std::invalid_argument("synthetic data needs at least 2 features");
  if (o.steps < 3) throw std::invalid_argument("synthetic data needs at least 3 steps");
  if (!(o.noise >= 0.0) || !(o.level_jitter >= 0.0) || !(o.class_offset >= 0.0)) {
    throw std::invalid_argument("synthetic noise, jitter and offset must be nonnegative");
  }
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<int> cycles_dist(1, 3);
  std::uniform_real_distribution<double> amp_dist(0.5, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  struct FeatureShape {
    int cycles;
    double amplitude;
    double phase;
    bool discriminative;
  };
  std::vector<FeatureShape> shapes(o.features);
  for (std::size_t j = 0; j < o.features; ++j) {
    shapes[j] = {cycles_dist(rng), amp_dist(rng), phase_dist(rng), j % 2 == 0};
  }

  std::uniform_real_distribution<double> level_dist(-o.level_jitter, o.level_jitter);
  std::uniform_real_distribution<double> scale_dist(0.8, 1.2);
  std::uniform_real_distribution<double> jitter_dist(-0.3, 0.3);
  std::normal_distribution<double> noise_dist(0.0, 1.0);

  const double steps = static_cast<double>(o.steps);
  std::vector<Sample> samples(o.samples);
  for (std::size_t s = 0; s < o.samples; ++s) {
    Sample& out = samples[s];
    out.label = s < o.samples / 2 ? 0 : 1;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", s);
    out.id = id;
    out.times.resize(o.steps);
    out.present.assign(o.steps, 1);
    out.values.resize(o.steps * o.features);
    for (std::size_t k = 0; k < o.steps; ++k) out.times[k] = static_cast<double>(k);
    const double sign = out.label == 1 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < o.features; ++j) {
      const FeatureShape& f = shapes[j];
      const double level = (f.discriminative ? sign * o.class_offset : 0.0) + level_dist(rng);
      const double amp = f.amplitude * scale_dist(rng);
      const double class_phase = f.discriminative && out.label == 1 ? 0.5 * std::numbers::pi : 0.0;
      const double phase = f.phase + class_phase + jitter_dist(rng);
      for (std::size_t k = 0; k < o.steps; ++k) {
        const double angle =
            2.0 * std::numbers::pi * f.cycles * static_cast<double>(k) / steps + phase;
        double v = level + amp * std::sin(angle);
        if (o.noise > 0.0) v += o.noise * noise_dist(rng);
        out.values[k * o.features + j] = v;
      }
    }
  }
  DatasetSplit split = stratified_split(std::move(samples), o.seed);
  split.features = o.features;
  split.steps = o.steps;
  split.window_hours = steps;
  return split;
}

// ---- removal ---------------------------------------------------------------------

std::size_t RemovalPlan::removed() const {
  std::size_t n = 0;
  for (const Chunk& c : chunks) n += c.length();
  return n;
}

bool RemovalPlan::removes(std::size_t step) const {
  return std::any_of(chunks.begin(), chunks.end(),
                     [step](const Chunk& c) { return step >= c.begin && step < c.end; });
}

RemovalPlan make_removal_plan(double fraction, std::size_t steps) {
  if (!(fraction >= 0.0) || fraction >= 1.0) {
    throw std::invalid_argument("removal fraction must be in [0, 1), got " +
                                std::to_string(fraction));
  }
  RemovalPlan plan;
  plan.fraction = fraction;
  plan.steps = steps;
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(steps)));
  if (total == 0) return plan;
  if (steps < 3) throw std::invalid_argument("removal needs at least 3 steps");
  std::size_t len[3];
  for (std::size_t c = 0; c < 3; ++c) len[c] = total / 3 + (c < total % 3 ? 1 : 0);

  const Chunk after_first{1, 1 + len[0]};
  const std::size_t mid_begin = steps / 2 >= len[1] / 2 ? steps / 2 - len[1] / 2 : 0;
  const Chunk middle{mid_begin, mid_begin + len[1]};
  const Chunk end_chunk{steps - std::min(steps, len[2]), steps};
  std::vector<Chunk> chunks;
  for (const Chunk& c : {after_first, middle, end_chunk}) {
    if (c.length() > 0) chunks.push_back(c);
  }
  for (std::size_t c = 0; c + 1 < chunks.size(); ++c) {
    if (chunks[c].end >= chunks[c + 1].begin) {
      throw std::invalid_argument("removal of " + std::to_string(total) + " steps cannot host " +
                                  "three separate chunks in " + std::to_string(steps) + " steps");
    }
  }
  plan.chunks = std::move(chunks);
  return plan;
}

void apply_removal(std::vector<Sample>& samples, const RemovalPlan& plan) {
  for (Sample& s : samples) {
    if (s.present.size() != plan.steps) {
      throw std::invalid_argument("apply_removal: sample " + s.id + " has " +
                                  std::to_string(s.present.size()) + " steps, plan expects " +
                                  std::to_string(plan.steps));
    }
    require_regular(s);
    for (const Chunk& c : plan.chunks) {
      for (std::size_t k = c.begin; k < c.end; ++k) s.present[k] = 0;
    }
  }
}

IrregularSeriesBatch apply_removal(const IrregularSeriesBatch& batch, const RemovalPlan& plan) {
  if (batch.steps() != plan.steps) {
    throw std::invalid_argument("apply_removal: batch has " + std::to_string(batch.steps()) +
                                " steps, plan expects " + std::to_string(plan.steps));
  }
  if (!std::all_of(batch.present.begin(), batch.present.end(),
                   [](std::uint8_t p) { return p != 0; })) {
    throw std::invalid_argument("apply_removal: batch is not fully regular");
  }
  IrregularSeriesBatch out = batch;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (const Chunk& c : plan.chunks) {
      for (std::size_t k = c.begin; k < c.end; ++k) out.present[r * batch.steps() + k] = 0;
    }
  }
  return out;
}

DatasetSplit apply_removal(const DatasetSplit& data, const RemovalPlan& plan) {
  DatasetSplit out = data;
  apply_removal(out.train, plan);
  apply_removal(out.validation, plan);
  apply_removal(out.test, plan);
  return out;
}

Tensor carry_forward(const IrregularSeriesBatch& batch) {
  const std::size_t n = batch.size();
  const std::size_t t = batch.steps();
  const std::size_t f = batch.features();
  std::vector<double> out = batch.values.to_vector();
  for (std::size_t r = 0; r < n; ++r) {
    if (!batch.is_present(r, 0)) {
      throw std::invalid_argument("carry_forward: sample " + std::to_string(r) +
                                  " has no observation at step 0");
    }
    std::size_t last = 0;
    for (std::size_t k = 1; k < t; ++k) {
      if (batch.is_present(r, k)) {
        last = k;
        continue;
      }
      std::copy_n(out.begin() + static_cast<long>((r * t + last) * f), f,
                  out.begin() + static_cast<long>((r * t + k) * f));
    }
  }
  return Tensor::from({n, t, f}, std::move(out));
}

// ---- external format --------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double parse_double(const std::string& tok, std::size_t line, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw DataFormatError(line, std::string("bad ") + what + " '" + tok + "'");
  }
  if (!std::isfinite(v)) throw DataFormatError(line, std::string("non-finite ") + what);
  return v;
}

std::size_t parse_count(const std::string& tok, std::size_t line, const char* what) {
  std::size_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v == 0) {
    throw DataFormatError(line, std::string("bad ") + what + " '" + tok + "'");
  }
  return v;
}

void write_double(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

DatasetSplit load_external(std::istream& in, const LoadOptions& options) {
  std::size_t line_no = 0;
  std::string raw;
  auto next_line = [&](std::string& line) {
    while (std::getline(in, raw)) {
      ++line_no;
      line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      return true;
    }
    return false;
  };

  std::string line;
  if (!next_line(line)) throw DataFormatError(0, "no samples: file is empty");
  {
    const auto w = words(line);
    if (w.size() != 2 || w[0] != "coper-its" || w[1] != "1") {
      throw DataFormatError(line_no, "expected header 'coper-its 1'");
    }
  }
  std::size_t features = 0;
  std::size_t steps = 0;
  std::optional<double> window;
  bool have_line = false;
  while (next_line(line)) {
    const auto w = words(line);
    if (w.size() == 2 && w[0] == "features") {
      features = parse_count(w[1], line_no, "feature count");
    } else if (w.size() == 2 && w[0] == "steps") {
      steps = parse_count(w[1], line_no, "step count");
    } else if (w.size() == 2 && w[0] == "window") {
      window = parse_double(w[1], line_no, "window");
      if (*window <= 0.0) throw DataFormatError(line_no, "window must be positive");
    } else {
      have_line = true;
      break;
    }
  }
  if (features == 0 || steps == 0) {
    throw DataFormatError(line_no, "header must declare 'features' and 'steps'");
  }
  if (options.expected_features && *options.expected_features != features) {
    throw DataFormatError(line_no, "file declares " + std::to_string(features) +
                                       " features, expected " +
                                       std::to_string(*options.expected_features));
  }
  const double window_hours = window.value_or(static_cast<double>(steps));

  std::vector<Sample> samples;
  std::vector<std::string> split_tags;
  while (have_line) {
    const auto w = words(line);
    if (w.empty() || w[0] != "sample" || w.size() < 3 || w.size() > 4) {
      throw DataFormatError(line_no, "expected 'sample <id> <label> [split]'");
    }
    Sample s;
    s.id = w[1];
    if (w[2] != "0" && w[2] != "1") {
      throw DataFormatError(line_no, "label must be 0 or 1, got '" + w[2] + "'");
    }
    s.label = w[2] == "1" ? 1 : 0;
    std::string tag;
    if (w.size() == 4) {
      tag = w[3];
      if (tag != "train" && tag != "validation" && tag != "test") {
        throw DataFormatError(line_no, "unknown split '" + tag + "'");
      }
    }
    s.times.resize(steps);
    s.present.resize(steps);
    s.values.assign(steps * features, 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
      if (!next_line(line)) {
        throw DataFormatError(line_no, "sample " + s.id + " ends after " + std::to_string(k) +
                                           " of " + std::to_string(steps) + " rows");
      }
      const auto cols = split_on(line, ',');
      if (cols.size() < 2) throw DataFormatError(line_no, "row needs '<hour>,<present>,...'");
      const double hour = parse_double(cols[0], line_no, "timestamp");
      if (hour < 0.0 || hour > window_hours) {
        throw DataFormatError(line_no, "timestamp outside [0, window]");
      }
      if (k > 0 && hour < s.times[k - 1]) {
        throw DataFormatError(line_no, "timestamps must be nondecreasing");
      }
      if (cols[1] != "0" && cols[1] != "1") {
        throw DataFormatError(line_no, "present flag must be 0 or 1");
      }
      s.times[k] = hour;
      s.present[k] = cols[1] == "1" ? 1 : 0;
      const std::size_t given = cols.size() - 2;
      if (given == 0 && !s.present[k]) continue;
      if (given != features) {
        throw DataFormatError(line_no, "row has " + std::to_string(given) + " values, expected " +
                                           std::to_string(features));
      }
      for (std::size_t j = 0; j < features; ++j) {
        s.values[k * features + j] = parse_double(cols[j + 2], line_no, "value");
      }
    }
    if (std::none_of(s.present.begin(), s.present.end(), [](std::uint8_t p) { return p != 0; })) {
      throw DataFormatError(line_no, "sample " + s.id + " has no present step");
    }
    samples.push_back(std::move(s));
    split_tags.push_back(tag);
    have_line = next_line(line);
  }
  if (samples.empty()) throw DataFormatError(line_no, "no samples");

  const bool any_tag = std::any_of(split_tags.begin(), split_tags.end(),
                                   [](const std::string& t) { return !t.empty(); });
  const bool all_tag = std::all_of(split_tags.begin(), split_tags.end(),
                                   [](const std::string& t) { return !t.empty(); });
  if (any_tag && !all_tag) {
    throw DataFormatError(0, "either every sample or no sample must carry a split tag");
  }
  DatasetSplit out;
  if (all_tag) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      auto& dst = split_tags[s] == "train"        ? out.train
                  : split_tags[s] == "validation" ? out.validation
                                                  : out.test;
      dst.push_back(std::move(samples[s]));
    }
  } else {
    out = stratified_split(std::move(samples), options.split_seed);
  }
  out.features = features;
  out.steps = steps;
  out.window_hours = window_hours;
  return out;
}

DatasetSplit load_external(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_external(in, options);
}

void save_external(std::ostream& out, const DatasetSplit& data) {
  out << "coper-its 1\n";
  out << "features " << data.features << '\n';
  out << "steps " << data.steps << '\n';
  out << "window ";
  write_double(out, data.window_hours);
  out << '\n';
  auto write_split = [&](const std::vector<Sample>& split, const char* tag) {
    for (const Sample& s : split) {
      out << "sample " << s.id << ' ' << s.label << ' ' << tag << '\n';
      for (std::size_t k = 0; k < data.steps; ++k) {
        write_double(out, s.times[k]);
        out << ',' << int(s.present[k]);
        for (std::size_t j = 0; j < data.features; ++j) {
          out << ',';
          write_double(out, s.values[k * data.features + j]);
        }
        out << '\n';
      }
    }
  };
  write_split(data.train, "train");
  write_split(data.validation, "validation");
  write_split(data.test, "test");
}

void save_external(const std::filesystem::path& path, const DatasetSplit& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_external(out, data);
}

// ---- batches ------------------------------------------------------------------------

void IrregularSeriesBatch::validate() const {
  const std::size_t n = size();
  const std::size_t t = steps();
  if (times.size() != n || present.size() != n * t || labels.size() != n) {
    throw std::invalid_argument("batch: ragged times/present/labels");
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (times[r].size() != t) throw std::invalid_argument("batch: ragged timestamps");
    bool any = false;
    for (std::size_t k = 0; k < t; ++k) {
      const double h = times[r][k];
      if (!(h >= 0.0) || h > window_hours) {
        throw std::invalid_argument("batch: timestamp outside [0, window]");
      }
      if (k > 0 && h < times[r][k - 1]) throw std::invalid_argument("batch: decreasing timestamps");
      any = any || is_present(r, k);
    }
    if (!any) throw std::invalid_argument("batch: sample " + std::to_string(r) + " has no present step");
  }
}

IrregularSeriesBatch make_batch(std::span<const Sample> samples, std::span<const std::size_t> order,
                                std::size_t steps, std::size_t features, double window_hours) {
  if (order.empty()) throw std::invalid_argument("make_batch: empty batch");
  IrregularSeriesBatch b;
  b.window_hours = window_hours;
  std::vector<double> values;
  values.reserve(order.size() * steps * features);
  for (std::size_t idx : order) {
    const Sample& s = samples[idx];
    if (s.values.size() != steps * features || s.present.size() != steps) {
      throw std::invalid_argument("make_batch: sample " + s.id + " does not match batch layout");
    }
    values.insert(values.end(), s.values.begin(), s.values.end());
    b.times.push_back(s.times);
    b.present.insert(b.present.end(), s.present.begin(), s.present.end());
    b.labels.push_back(s.label);
  }
  b.values = Tensor::from({order.size(), steps, features}, std::move(values));
  return b;
}

IrregularSeriesBatch make_batch(std::span<const Sample> samples, std::size_t steps,
                                std::size_t features, double window_hours) {
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return make_batch(samples, order, steps, features, window_hours);
}

}  // namespace coper
