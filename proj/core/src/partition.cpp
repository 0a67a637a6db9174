#include "apx/partition.hpp"

#include <algorithm>
#include <cmath>

#include "apx/rng.hpp"

namespace apx {
namespace {

void check_domain(const GridSpec& grid, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != grid.d) {
        throw ShapeMismatch("point dim " + std::to_string(x.size()) + " vs grid d " +
                            std::to_string(grid.d));
    }
    for (double v : x) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw OutOfDomain("coordinate " + std::to_string(v));
        }
    }
}

// Distance from x to the nearest point of the lattice {offset + k/step_count}.
double lattice_distance(double x, int step_count, double offset) {
    double scaled = (x - offset) * step_count;
    double frac = scaled - std::floor(scaled);
    double dist = std::min(frac, 1.0 - frac) / step_count;
    return dist;
}

}  // namespace

void GridSpec::validate(bool for_weights) const {
    if (d < 1 || d > 3) throw PreconditionFailed("grid dimension must be 1..3");
    if (K < 1) throw PreconditionFailed("K must be >= 1");
    double kd = std::pow(static_cast<double>(K), d);
    if (kd > 1e6) throw PreconditionFailed("K^d exceeds the width budget");
    double cap = for_weights ? 1.0 / (12.0 * K * K) : 1.0 / (3.0 * K * K);
    if (!(delta > 0.0 && delta < cap)) {
        throw PreconditionFailed("delta must lie in (0, " + std::to_string(cap) + ")");
    }
}

std::vector<int> coarse_index(const GridSpec& grid, const std::vector<double>& x) {
    check_domain(grid, x);
    std::vector<int> idx(grid.d);
    for (int l = 0; l < grid.d; ++l) {
        int i = static_cast<int>(std::floor(x[l] * grid.K)) + 1;
        idx[l] = std::min(i, grid.K);
    }
    return idx;
}

void refined_index(const GridSpec& grid, const std::vector<double>& x,
                   std::vector<int>& i, std::vector<int>& j) {
    check_domain(grid, x);
    i.assign(grid.d, 1);
    j.assign(grid.d, 1);
    long k2 = static_cast<long>(grid.K) * grid.K;
    for (int l = 0; l < grid.d; ++l) {
        long fine = std::min(static_cast<long>(std::floor(x[l] * k2)), k2 - 1);
        i[l] = static_cast<int>(fine / grid.K) + 1;
        j[l] = static_cast<int>(fine % grid.K) + 1;
    }
}

std::vector<double> corner(const GridSpec& grid, const std::vector<int>& i) {
    if (static_cast<int>(i.size()) != grid.d) throw IndexOutOfRange("corner index dim");
    std::vector<double> a(grid.d);
    for (int l = 0; l < grid.d; ++l) {
        if (i[l] < 1 || i[l] > grid.K) {
            throw IndexOutOfRange("coarse index " + std::to_string(i[l]));
        }
        a[l] = static_cast<double>(i[l] - 1) / grid.K;
    }
    return a;
}

std::vector<double> refined_corner(const GridSpec& grid, const std::vector<int>& i,
                                   const std::vector<int>& j) {
    std::vector<double> a = corner(grid, i);
    for (int l = 0; l < grid.d; ++l) {
        if (j[l] < 1 || j[l] > grid.K) {
            throw IndexOutOfRange("refined index " + std::to_string(j[l]));
        }
        a[l] += static_cast<double>(j[l] - 1) / (static_cast<double>(grid.K) * grid.K);
    }
    return a;
}

bool in_interior(const GridSpec& grid, const std::vector<double>& x, GridLevel level,
                 const std::vector<int>* shift) {
    check_domain(grid, x);
    long k2 = static_cast<long>(grid.K) * grid.K;
    for (int l = 0; l < grid.d; ++l) {
        double dist;
        if (shift != nullptr) {
            int v = (*shift)[l];
            if (v != 1 && v != 2) throw IndexOutOfRange("shift component");
            // v=1: edges on the refined lattice k/K^2; v=2: half-step offset.
            // Domain boundaries at 0 and 1 are genuine edges only for the
            // unshifted lattice; the offset lattice's boundary cells are
            // clipped and the clip line carries no band.
            double offset = v == 1 ? 0.0 : 0.5 / static_cast<double>(k2);
            dist = lattice_distance(x[l], static_cast<int>(k2), offset);
        } else if (level == GridLevel::Coarse) {
            dist = lattice_distance(x[l], grid.K, 0.0);
        } else {
            dist = lattice_distance(x[l], static_cast<int>(k2), 0.0);
        }
        if (!(dist > grid.delta)) return false;
    }
    return true;
}

bool in_band(const GridSpec& grid, const std::vector<double>& x, GridLevel level,
             const std::vector<int>* shift) {
    return !in_interior(grid, x, level, shift);
}

BandMeasure band_measure(const GridSpec& grid, GridLevel level) {
    grid.validate();
    BandMeasure result;
    double cells = level == GridLevel::Coarse ? grid.K : static_cast<double>(grid.K) * grid.K;
    double cell_len = 1.0 / cells;
    double interior_len = cell_len - 2.0 * grid.delta;
    result.exact = 1.0 - std::pow(cells, grid.d) * std::pow(std::max(interior_len, 0.0), grid.d);
    // Union bound: d faces-per-axis estimate from the L2 theorem proof.
    double cells_total = std::pow(cells, grid.d);
    result.paper_bound = 2.0 * grid.d * std::pow(cell_len, grid.d - 1) * grid.delta * cells_total;
    return result;
}

double band_measure_mc(const GridSpec& grid, GridLevel level, long n_samples,
                       std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0x6d63u);
    long hits = 0;
    std::vector<double> x(grid.d);
    for (long i = 0; i < n_samples; ++i) {
        for (int l = 0; l < grid.d; ++l) x[l] = rng.uniform();
        if (in_band(grid, x, level)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n_samples);
}

}  // namespace apx
