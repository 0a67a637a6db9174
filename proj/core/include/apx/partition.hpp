#pragma once

#include <cstdint>
#include <vector>

#include "apx/errors.hpp"

namespace apx {

// Hierarchical grid on [0,1]^d: K^d coarse cells, each split into K^d refined
// cells (K^2 per axis overall), plus the 2^d half-step shifted refinements.
struct GridSpec {
    int d = 1;
    int K = 1;
    double delta = 0.0;

    void validate(bool for_weights = false) const;
};

enum class GridLevel { Coarse, Refined };

struct BandMeasure {
    double exact = 0.0;        // closed-form Lebesgue measure of the band union
    double paper_bound = 0.0;  // 2 d K^{2d} (K^-2)^{d-1} delta style upper bound
};

// 1-based per-axis coarse cell index; right boundary clamps to cell K.
std::vector<int> coarse_index(const GridSpec& grid, const std::vector<double>& x);

// 1-based (coarse, refined-within-coarse) indices.
void refined_index(const GridSpec& grid, const std::vector<double>& x,
                   std::vector<int>& i, std::vector<int>& j);

// Lower-left corner of the coarse cell i.
std::vector<double> corner(const GridSpec& grid, const std::vector<int>& i);

// Lower-left corner of refined cell (i, j).
std::vector<double> refined_corner(const GridSpec& grid, const std::vector<int>& i,
                                   const std::vector<int>& j);

// Open-box interior membership. With a null shift this is the unshifted
// coarse/refined interior; with a shift v in {1,2}^d it is the shifted refined
// interior (per-axis distance to the v_l edge lattice exceeding delta).
bool in_interior(const GridSpec& grid, const std::vector<double>& x, GridLevel level,
                 const std::vector<int>* shift = nullptr);

bool in_band(const GridSpec& grid, const std::vector<double>& x, GridLevel level,
             const std::vector<int>* shift = nullptr);

BandMeasure band_measure(const GridSpec& grid, GridLevel level);

double band_measure_mc(const GridSpec& grid, GridLevel level, long n_samples,
                       std::uint64_t seed);

}  // namespace apx
