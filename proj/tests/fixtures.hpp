#pragma once

#include "mrb/data_io.hpp"
#include "mrb/model.hpp"

namespace mrb::testing {

/// A model small enough to train in milliseconds: 4 units everywhere,
/// kernel 3, 3 filters.
inline ModelConfig tiny_model(std::size_t bart_dim = 8, std::size_t roberta_dim = 6,
                              std::size_t n_classes = 3, CellType cell = CellType::bilstm) {
  ModelConfig cfg;
  for (BranchConfig* b : {&cfg.bart, &cfg.roberta, &cfg.ensemble}) {
    b->cell = cell;
    b->units = 4;
    b->conv_filters = 3;
    b->conv_kernel = 3;
  }
  cfg.bart_dim = bart_dim;
  cfg.roberta_dim = roberta_dim;
  cfg.n_classes = n_classes;
  return cfg;
}

inline EmbeddingDataset small_synthetic(std::uint64_t seed, std::size_t n_classes = 3,
                                        std::size_t per_class = 30, double separation = 4.0,
                                        std::size_t bart_dim = 8, std::size_t roberta_dim = 6) {
  SynthSpec spec;
  spec.n_classes = n_classes;
  spec.per_class = per_class;
  spec.bart_dim = bart_dim;
  spec.roberta_dim = roberta_dim;
  spec.separation = separation;
  spec.seed = seed;
  return gen_synthetic(spec);
}

}  // namespace mrb::testing
