#include "coper/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace coper {

void save_parameters(std::ostream& out, const ParameterList& params) {
  out << "coper-params 1\n";
  out << "count " << params.size() << '\n';
  char buf[32];
  for (const auto& p : params) {
    out << "param " << p.name << ' ' << p.tensor.rank();
    for (std::size_t d : p.tensor.shape()) out << ' ' << d;
    out << '\n';
    bool first = true;
    for (double v : p.tensor.data()) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      if (!first) out << ' ';
      out.write(buf, res.ptr - buf);
      first = false;
    }
    out << '\n';
  }
}

void save_parameters(const std::filesystem::path& path, const ParameterList& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_parameters(out, params);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void load_parameters(std::istream& in, ParameterList& params) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "coper-params" || version != 1) {
    throw std::runtime_error("not a coper-params v1 checkpoint");
  }
  std::string tag;
  std::size_t count = 0;
  if (!(in >> tag >> count) || tag != "count") throw std::runtime_error("checkpoint: missing count");
  if (count != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                             std::to_string(params.size()));
  }
  std::map<std::string, Tensor*> by_name;
  for (auto& p : params) by_name[p.name] = &p.tensor;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t rank = 0;
    if (!(in >> tag >> name >> rank) || tag != "param") {
      throw std::runtime_error("checkpoint: malformed entry " + std::to_string(i));
    }
    Shape shape(rank);
    for (auto& d : shape) in >> d;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: unknown parameter " + name);
    Tensor& target = *it->second;
    if (target.shape() != shape) {
      throw std::runtime_error("checkpoint: " + name + " has shape " + shape_str(shape) +
                               ", model expects " + shape_str(target.shape()));
    }
    auto dst = target.mutable_data();
    for (double& v : dst) {
      std::string token;
      if (!(in >> token)) throw std::runtime_error("checkpoint: truncated values for " + name);
      const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
        throw std::runtime_error("checkpoint: bad value '" + token + "' in " + name);
      }
    }
    by_name.erase(it);
  }
}

void load_parameters(const std::filesystem::path& path, ParameterList& params) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  load_parameters(in, params);
}

std::vector<std::vector<double>> snapshot_values(const ParameterList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor.to_vector());
  return out;
}

void restore_values(ParameterList& params, const std::vector<std::vector<double>>& values) {
  if (values.size() != params.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    if (dst.size() != values[i].size()) throw std::invalid_argument("snapshot shape mismatch");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace coper
