#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r3/network.hpp"
#include "r3/pde.hpp"

namespace r3::diag {

using ad::Index;
using ad::Vector;

// Adjusted Fisher-Pearson skewness with population moments. Empty when
// N < 3 or the data are constant.
std::optional<double> skewness(std::span<const double> samples);
// Excess kurtosis m4 / m2^2 - 3. Empty when N < 2 or the data are constant.
std::optional<double> kurtosis(std::span<const double> samples);

// 100 * ||pred - ref|| / ||ref||; empty when ||ref|| = 0.
std::optional<double> relative_l2(std::span<const double> predicted, std::span<const double> reference);

// Mean over {u < 0, u >= 0} of the per-class intersection over union.
double miou(std::span<const double> predicted, std::span<const double> reference);

// u (or |R|) on a lattice over the problem box. 1-D problems get a single
// t column at 0; Eikonal uses the second axis as "t".
pde::ReferenceGrid field_grid(const net::FieldNetwork& net, const pde::Problem& problem, std::span<const int> counts);
pde::ReferenceGrid residual_field_grid(const net::FieldNetwork& net, const pde::Problem& problem,
                                       std::span<const int> counts);
// The problem's reference solution on the same lattice.
pde::ReferenceGrid reference_field_grid(const pde::Problem& problem, std::span<const int> counts);

struct FailureThresholds {
    double skewness = 10.0;
    double kurtosis = 100.0;
    Index sustain = 1000;           // minimum window length in iterations
    double flat_tolerance = 0.05;   // relative rel-L2 drop still treated as flat
};

struct FailureWindow {
    Index first_iteration = 0;
    Index last_iteration = 0;
};

struct FailureReport {
    std::vector<bool> flagged;  // per sample
    std::vector<FailureWindow> windows;
    bool any() const { return !windows.empty(); }
};

// Flags windows in which skewness and kurtosis both stay at or above their
// thresholds for at least `sustain` iterations while rel-L2 does not fall by
// more than `flat_tolerance` across the window. Missing values break a
// window; a missing rel-L2 series imposes no condition.
FailureReport failure_indicator(std::span<const Index> iterations, std::span<const std::optional<double>> skew,
                                std::span<const std::optional<double>> kurt,
                                std::span<const std::optional<double>> rel_l2, const FailureThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Per-log-step record and its CSV form.

struct DiagnosticsRow {
    Index iteration = 0;
    double lr = 0.0;
    double gamma = 0.0;
    double loss = 0.0;
    double loss_r = 0.0;
    double loss_ic = 0.0;
    double loss_bc = 0.0;
    double mean_abs_r = 0.0;  // over the training population
    double max_abs_r = 0.0;
    std::optional<double> skewness;  // of |R| over the evaluation lattice
    std::optional<double> kurtosis;
    std::optional<double> rel_l2;
    std::uint64_t eval_counter = 0;
    double mean_gate = 1.0;
    Index population = 0;
    Index retained = 0;
    bool uniform_fallback = false;

    bool operator==(const DiagnosticsRow&) const = default;
};

using Series = std::vector<DiagnosticsRow>;

const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string csv_line(const DiagnosticsRow& row);
DiagnosticsRow parse_csv_line(const std::string& line);

void write_csv(const Series& series, const std::filesystem::path& path);
Series read_csv(const std::filesystem::path& path);

FailureReport failure_indicator(const Series& series, const FailureThresholds& thresholds = {});

}  // namespace r3::diag
