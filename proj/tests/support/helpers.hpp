#pragma once

#include "siriib/model.hpp"

#include <torch/torch.h>

namespace siriib::testing {

inline ArchitectureDescriptor small_descriptor(bool with_siriib, int64_t width = 8) {
  ArchitectureDescriptor d;
  d.base_width = width;
  d.siriib = with_siriib;
  return d;
}

/// Copies every backbone parameter and buffer of `from` into `to`.
inline void copy_backbone(const Classifier& from, Classifier& to) {
  torch::NoGradGuard guard;
  auto src = from->backbone->named_parameters();
  for (auto& p : to->backbone->named_parameters()) p.value().copy_(src[p.key()]);
  auto bsrc = from->backbone->named_buffers();
  for (auto& b : to->backbone->named_buffers()) b.value().copy_(bsrc[b.key()]);
}

/// Gives every projection small random weights so injections are nonzero.
inline void randomize_projections(Classifier& model, double scale = 0.05) {
  torch::NoGradGuard guard;
  for (auto& p : model->siriib->named_parameters()) {
    if (p.key().rfind("p", 0) == 0) p.value().normal_(0.0, scale);
  }
}

}  // namespace siriib::testing
