#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xrnet/layers.hpp"

namespace xrnet {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 1e-4;

    bool all_passed() const {
        for (const GradCheckEntry& e : entries) {
            if (!(e.max_rel_error < tolerance)) {
                return false;
            }
        }
        return true;
    }
};

// Checks one layer's backward against central finite differences through a
// fixed linear readout, in double precision. Returns the worst relative
// error over the input and every parameter. Dropout draws are replayed from
// `seed` on every probe so the mask is held fixed.
double check_layer_gradients(Layer<double>& layer, const std::vector<std::size_t>& input_shape,
                             std::uint64_t seed);

// Finite-difference check of the fused softmax cross-entropy gradient.
double check_softmax_gradients(std::uint64_t seed);

// End-to-end check of a tiny model (8x8 input, one conv block, one hidden
// dense layer, dropout 0): d(loss)/d(parameter) for every parameter.
double check_model_gradients(std::uint64_t seed);

// The full suite the `gradcheck` command runs: one entry per layer kind plus
// the end-to-end model.
GradCheckReport run_gradient_checks(std::uint64_t seed);

}  // namespace xrnet
