#pragma once

#include "mmjsd/tensor.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmjsd {

enum class Likelihood { gaussian, laplace, categorical };

inline const char* to_string(Likelihood k) {
  switch (k) {
    case Likelihood::gaussian: return "gaussian";
    case Likelihood::laplace: return "laplace";
    case Likelihood::categorical: return "categorical";
  }
  return "?";
}

inline Likelihood parse_likelihood(const std::string& s) {
  if (s == "gaussian") return Likelihood::gaussian;
  if (s == "laplace") return Likelihood::laplace;
  if (s == "categorical") return Likelihood::categorical;
  throw std::invalid_argument("unknown likelihood '" + s + "'");
}

/// One modality: flat element count, likelihood, and MLP hidden widths.
/// A categorical modality holds element_count / alphabet one-hot positions.
struct ModalitySpec {
  std::string name;
  std::size_t element_count = 0;
  Likelihood likelihood = Likelihood::gaussian;
  std::size_t alphabet = 0;
  std::vector<std::size_t> hidden{256, 256};

  void validate() const {
    if (element_count == 0) throw std::invalid_argument("modality '" + name + "': element_count must be >= 1");
    if (likelihood == Likelihood::categorical) {
      if (alphabet < 2) throw std::invalid_argument("modality '" + name + "': categorical needs alphabet >= 2");
      if (element_count % alphabet != 0)
        throw std::invalid_argument("modality '" + name + "': element_count is not a multiple of the alphabet");
    }
    for (std::size_t h : hidden)
      if (h == 0) throw std::invalid_argument("modality '" + name + "': zero hidden width");
  }
  std::size_t positions() const { return likelihood == Likelihood::categorical ? element_count / alphabet : element_count; }
};

/// Mini-batch of all modalities (n x element_count each) with an availability mask.
/// Labels are carried for evaluation only.
template <class T>
struct ModalityBatch {
  std::vector<Tensor<T>> data;
  std::vector<bool> available;
  std::vector<int> labels;

  std::size_t size() const { return data.empty() ? 0 : data.front().rows(); }
  std::size_t modalities() const { return data.size(); }

  void validate() const {
    if (data.empty()) throw std::invalid_argument("batch has no modalities");
    if (available.size() != data.size()) throw std::invalid_argument("batch mask length does not match modality count");
    bool any = false;
    for (std::size_t j = 0; j < data.size(); ++j) {
      if (data[j].rank() != 2 || data[j].rows() != data.front().rows())
        throw ShapeError("batch modalities must be matrices sharing the batch size");
      any = any || available[j];
    }
    if (!any) throw std::invalid_argument("batch mask selects no modality");
  }
  bool complete() const {
    for (bool a : available)
      if (!a) return false;
    return true;
  }
};

}  // namespace mmjsd
