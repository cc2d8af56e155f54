#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "kscope/core.hpp"

namespace kscope {

/// Line-pair correlation of k-space columns, summed over the readout axis:
///   C(i, j) = (N - 1)^{-1} sum_n S_n(i) conj(S_n(j)),  S_n(i) = sum_r K_n(r, i)
/// which equals sum_{r, r'} of the flattened-sample covariance (N - 1)^{-1} X X^H
/// over the rows of columns i and j.
struct LineCorrelationMap {
    Eigen::MatrixXcd values;

    Index size() const { return values.rows(); }
    Eigen::MatrixXd magnitude() const { return values.cwiseAbs(); }
    Eigen::MatrixXd phase() const;
};

/// Single-coil k-space of a slice, cropped in image space to crop x crop.
ComplexImage cropped_single_coil_kspace(const KSpaceSlice& ks, Index crop);

LineCorrelationMap autocorr_kspace(const std::vector<ComplexImage>& kspaces);
LineCorrelationMap autocorr(const std::vector<KSpaceSlice>& slices, Index crop = 128);

struct AutocorrSummary {
    Index acs_begin = 0;
    Index acs_end = 0;
    std::vector<Index> partners;        // strongest partner j != i of every anchor column i
    double argmax_in_acs_fraction = 0;  // share of anchors whose partner lies in the ACS block
    double phase_circular_variance = 0; // over off-diagonal entries with neither line in the ACS block
};

AutocorrSummary summarize(const LineCorrelationMap& map, double acs_fraction = 0.08);

/// Magnitude and phase columns at the anchors plus the summary.
nlohmann::json to_json(const LineCorrelationMap& map, const std::vector<Index>& anchors, const AutocorrSummary& s);

// ---------------------------------------------------------------------------

struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::size_t> counts;

    std::size_t total() const;
    double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

/// Equal-width bins on [lo, hi]; values outside are clamped into the end bins.
/// Throws on non-finite values, zero bins or hi <= lo.
Histogram histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi);
/// Range taken from the data (padded when all values coincide).
Histogram histogram(const std::vector<double>& values, std::size_t bins);

nlohmann::json to_json(const Histogram& h);

// Plain SVG renderers. Numbers are printed with fixed precision so equal
// inputs give equal bytes.

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

std::string svg_histograms(const std::string& title, const std::vector<std::pair<std::string, Histogram>>& hists);
std::string svg_lines(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series);
std::string svg_heatmap(const std::string& title, const Eigen::MatrixXd& values);

/// Renders a result document into `dir`: report.json with the tables and one
/// SVG per plot. Accepts one result object with a "kind" field or
/// {"results": [...]}. Throws DataError on schema violations. Returns the
/// files written, in order.
std::vector<std::filesystem::path> emit_report(const nlohmann::json& results, const std::filesystem::path& dir);

}  // namespace kscope
