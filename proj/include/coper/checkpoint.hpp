#pragma once

#include <filesystem>
#include <iosfwd>

#include "coper/layers.hpp"

namespace coper {

// Text checkpoint of named parameter tensors:
//
//   coper-params 1
//   count <N>
//   param <name> <rank> <d0> ... <d{rank-1}>
//   <numel values, %.17g, space separated>
//   ... repeated N times
//
// Values round-trip exactly. Loading matches by name and requires identical
// shapes; unknown or missing names are errors.
void save_parameters(std::ostream& out, const ParameterList& params);
void save_parameters(const std::filesystem::path& path, const ParameterList& params);
void load_parameters(std::istream& in, ParameterList& params);
void load_parameters(const std::filesystem::path& path, ParameterList& params);

// Snapshot/restore of parameter values in memory (used by early stopping).
std::vector<std::vector<double>> snapshot_values(const ParameterList& params);
void restore_values(ParameterList& params, const std::vector<std::vector<double>>& values);

}  // namespace coper
