#pragma once

#include <string>
#include <vector>

#include "pefnn/field.hpp"

namespace pefnn {

/// One PDE solution sample: T time slices of a channelsxHxW field on a
/// uniform grid, with recording cadence and spacing metadata.
struct Trajectory {
    int t = 0, c = 0, h = 0, w = 0;
    double dt_record = 1.0;
    double dx = 1.0, dy = 1.0;
    std::vector<std::string> channel_names;
    std::vector<double> data; // [t][c][y][x]

    Trajectory() = default;
    Trajectory(int t_, int c_, int h_, int w_)
        : t(t_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(t_) * c_ * h_ * w_, 0.0) {}

    double* slice(int ti, int ci) {
        return data.data() + (static_cast<std::size_t>(ti) * c + ci) * h * w;
    }
    const double* slice(int ti, int ci) const {
        return data.data() + (static_cast<std::size_t>(ti) * c + ci) * h * w;
    }

    /// Copy one time slice into a batch-1 Field.
    Field field_at(int ti) const {
        Field f(1, c, h, w, dx, dy);
        std::copy(slice(ti, 0), slice(ti, 0) + static_cast<std::size_t>(c) * h * w,
                  f.data.begin());
        return f;
    }
};

using Dataset = std::vector<Trajectory>;

/// Gather the same time slice of several trajectories into one batch Field.
Field gather_batch(const Dataset& data, const std::vector<int>& traj_idx, int ti);

/// Gather (trajectory, time) pairs into one batch Field.
Field gather_batch(const Dataset& data, const std::vector<std::pair<int, int>>& samples);

} // namespace pefnn
