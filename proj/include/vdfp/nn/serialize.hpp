#pragma once

// cereal bindings for the Eigen types, Rng and Parameter values.

#include <cereal/archives/binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>

#include "vdfp/nn/autodiff.hpp"
#include "vdfp/nn/rng.hpp"
#include "vdfp/nn/tensor.hpp"

namespace cereal {

template <class Archive, class Scalar, int R, int C, int O, int MR, int MC>
void save(Archive& ar, const Eigen::Matrix<Scalar, R, C, O, MR, MC>& m) {
  const std::int64_t rows = m.rows();
  const std::int64_t cols = m.cols();
  ar(rows, cols);
  ar(binary_data(m.data(), static_cast<std::size_t>(m.size()) * sizeof(Scalar)));
}

template <class Archive, class Scalar, int R, int C, int O, int MR, int MC>
void load(Archive& ar, Eigen::Matrix<Scalar, R, C, O, MR, MC>& m) {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  ar(rows, cols);
  m.resize(rows, cols);
  ar(binary_data(m.data(), static_cast<std::size_t>(m.size()) * sizeof(Scalar)));
}

}  // namespace cereal

namespace vdfp {

template <class Archive>
void save(Archive& ar, const Rng& r) {
  ar(r.key(), r.counter());
}

template <class Archive>
void load(Archive& ar, Rng& r) {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;
  ar(key, counter);
  r = Rng(key, counter);
}

namespace nn {

/// Writes names and values of a parameter list.
template <class Archive>
void save_params(Archive& ar, const ParamList& params) {
  const std::uint64_t n = params.size();
  ar(n);
  for (const Parameter* p : params) ar(p->name, p->value);
}

/// Reads values saved by save_params into staging storage; throws on any
/// name or shape mismatch. Nothing is assigned until commit_params().
template <class Archive>
std::vector<Mat> read_params(Archive& ar, const ParamList& params);

void commit_params(const ParamList& params, std::vector<Mat> staged);

template <class Archive>
std::vector<Mat> read_params(Archive& ar, const ParamList& params) {
  std::uint64_t n = 0;
  ar(n);
  if (n != params.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                             " parameters, found " + std::to_string(n));
  }
  std::vector<Mat> staged(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::string name;
    ar(name, staged[i]);
    if (name != params[i]->name) {
      throw std::runtime_error("checkpoint: parameter " + params[i]->name + " stored as " + name);
    }
    if (staged[i].rows() != params[i]->value.rows() || staged[i].cols() != params[i]->value.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
  }
  return staged;
}

inline void commit_params(const ParamList& params, std::vector<Mat> staged) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = std::move(staged[i]);
    params[i]->zero_grad();
  }
}

}  // namespace nn
}  // namespace vdfp
