#include "kscope/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kscope/corruption.hpp"
#include "kscope/evaluation.hpp"
#include "kscope/image.hpp"
#include "kscope/parallel.hpp"
#include "kscope/sampling.hpp"

namespace kscope {

Eigen::MatrixXd LineCorrelationMap::phase() const {
    return values.unaryExpr([](const cdouble& z) { return std::arg(z); });
}

ComplexImage cropped_single_coil_kspace(const KSpaceSlice& ks, Index crop) {
    const ComplexImage img = idft2(ComplexImage(single_coil(ks).coil(0).cast<cdouble>()));
    return dft2(center_crop(img, crop, crop));
}

LineCorrelationMap autocorr_kspace(const std::vector<ComplexImage>& kspaces) {
    if (kspaces.size() < 2) throw DataError("autocorr needs at least two slices");
    const Index h = kspaces.front().rows(), w = kspaces.front().cols();
    for (const auto& k : kspaces)
        if (k.rows() != h || k.cols() != w) throw DataError("autocorr: slices differ in shape");
    const auto n = static_cast<Index>(kspaces.size());
    Eigen::MatrixXcd s(w, n);
    parallel_for(kspaces.size(), [&](std::size_t i) { s.col(static_cast<Index>(i)) = kspaces[i].colwise().sum().transpose(); });

    LineCorrelationMap map;
    map.values.resize(w, w);
    const double scale = 1.0 / static_cast<double>(n - 1);
    parallel_for(static_cast<std::size_t>(w), [&](std::size_t ui) {
        const auto i = static_cast<Index>(ui);
        for (Index j = i; j < w; ++j) {
            cdouble acc = 0.0;
            for (Index m = 0; m < n; ++m) acc += s(i, m) * std::conj(s(j, m));
            map.values(i, j) = acc * scale;
        }
    });
    for (Index i = 0; i < w; ++i) {
        map.values(i, i) = map.values(i, i).real();
        for (Index j = i + 1; j < w; ++j) map.values(j, i) = std::conj(map.values(i, j));
    }
    return map;
}

LineCorrelationMap autocorr(const std::vector<KSpaceSlice>& slices, Index crop) {
    if (slices.size() < 2) throw DataError("autocorr needs at least two slices");
    for (const auto& s : slices)
        if (crop < 1 || crop > s.height() || crop > s.width())
            throw std::invalid_argument("autocorr: crop " + std::to_string(crop) + " exceeds the slice size");
    std::vector<ComplexImage> ks(slices.size());
    parallel_for(slices.size(), [&](std::size_t i) { ks[i] = cropped_single_coil_kspace(slices[i], crop); });
    return autocorr_kspace(ks);
}

AutocorrSummary summarize(const LineCorrelationMap& map, double acs_fraction) {
    const Index w = map.size();
    if (w < 2) throw std::invalid_argument("summarize: map needs at least two lines");
    const SamplingMask acs = full_mask(w, acs_block_size(w, acs_fraction));
    AutocorrSummary s;
    s.acs_begin = acs.acs_begin;
    s.acs_end = acs.acs_end;
    auto in_acs = [&](Index j) { return j >= s.acs_begin && j < s.acs_end; };
    const Eigen::MatrixXd mag = map.magnitude();
    Index hits = 0;
    for (Index i = 0; i < w; ++i) {
        Index best = i == 0 ? 1 : 0;
        for (Index j = 0; j < w; ++j)
            if (j != i && mag(i, j) > mag(i, best)) best = j;
        s.partners.push_back(best);
        if (in_acs(best)) ++hits;
    }
    s.argmax_in_acs_fraction = static_cast<double>(hits) / static_cast<double>(w);

    cdouble sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < w; ++i)
        for (Index j = 0; j < w; ++j)
            if (i != j && !in_acs(i) && !in_acs(j) && mag(i, j) > 0.0) {
                sum += map.values(i, j) / mag(i, j);
                ++count;
            }
    s.phase_circular_variance = count ? 1.0 - std::abs(sum) / static_cast<double>(count) : 0.0;
    return s;
}

nlohmann::json to_json(const LineCorrelationMap& map, const std::vector<Index>& anchors, const AutocorrSummary& s) {
    const Eigen::MatrixXd mag = map.magnitude(), ph = map.phase();
    nlohmann::json magnitude = nlohmann::json::array(), phase = nlohmann::json::array();
    for (Index i = 0; i < map.size(); ++i) {
        std::vector<double> a(static_cast<std::size_t>(map.size())), b(a.size());
        for (Index j = 0; j < map.size(); ++j) {
            a[static_cast<std::size_t>(j)] = mag(i, j);
            b[static_cast<std::size_t>(j)] = ph(i, j);
        }
        magnitude.push_back(a);
        phase.push_back(b);
    }
    nlohmann::json cols = nlohmann::json::array();
    for (Index a : anchors) {
        if (a < 0 || a >= map.size())
            throw std::invalid_argument("anchor " + std::to_string(a) + " outside 0.." + std::to_string(map.size() - 1));
        cols.push_back({{"anchor", a}, {"magnitude", magnitude[static_cast<std::size_t>(a)]},
                        {"phase", phase[static_cast<std::size_t>(a)]}});
    }
    return {{"kind", "autocorr"},
            {"size", map.size()},
            {"acs", {s.acs_begin, s.acs_end}},
            {"argmax_in_acs_fraction", s.argmax_in_acs_fraction},
            {"phase_circular_variance", s.phase_circular_variance},
            {"partners", s.partners},
            {"anchors", cols},
            {"magnitude", magnitude},
            {"phase", phase}};
}

// ---------------------------------------------------------------------------

std::size_t Histogram::total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

Histogram histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi) {
    if (bins == 0) throw std::invalid_argument("histogram: zero bins");
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("histogram: need lo < hi");
    Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
    const double width = h.bin_width();
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("histogram: non-finite value");
        const double pos = std::floor((v - lo) / width);
        const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
        ++h.counts[b];
    }
    return h;
}

Histogram histogram(const std::vector<double>& values, std::size_t bins) {
    if (values.empty()) return histogram(values, bins, 0.0, 1.0);
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn, hi = *mx;
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    return histogram(values, bins, lo, hi);
}

nlohmann::json to_json(const Histogram& h) { return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

// ---------------------------------------------------------------------------

namespace {

constexpr double kW = 480, kH = 320, kL = 60, kR = 20, kT = 36, kB = 44;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '"') out += "&quot;";
        else out += c;
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); }
    double py(double y) const { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); }
};

std::string open_svg(const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
           "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + num(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" + escape(title) + "</text>\n";
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
    std::ostringstream o;
    o << "<rect x=\"" << num(kL) << "\" y=\"" << num(kT) << "\" width=\"" << num(kW - kL - kR) << "\" height=\""
      << num(kH - kT - kB) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double x = f.x0 + (f.x1 - f.x0) * t / 4.0, y = f.y0 + (f.y1 - f.y0) * t / 4.0;
        o << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(kH - kB + 14) << "\" text-anchor=\"middle\">"
          << label_num(x) << "</text>\n";
        o << "<text x=\"" << num(kL - 4) << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">" << label_num(y)
          << "</text>\n";
    }
    o << "<text x=\"" << num((kL + kW - kR) / 2) << "\" y=\"" << num(kH - 8) << "\" text-anchor=\"middle\">"
      << escape(xlabel) << "</text>\n";
    o << "<text x=\"14\" y=\"" << num((kT + kH - kB) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << num((kT + kH - kB) / 2) << ")\">" << escape(ylabel) << "</text>\n";
    return o.str();
}

std::string legend(const std::vector<std::string>& names) {
    std::ostringstream o;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double y = kT + 14 + 14 * static_cast<double>(i);
        o << "<rect x=\"" << num(kW - kR - 110) << "\" y=\"" << num(y - 8) << "\" width=\"10\" height=\"8\" fill=\""
          << kPalette[i % 7] << "\"/>\n<text x=\"" << num(kW - kR - 96) << "\" y=\"" << num(y) << "\">"
          << escape(names[i]) << "</text>\n";
    }
    return o.str();
}

}  // namespace

std::string svg_histograms(const std::string& title, const std::vector<std::pair<std::string, Histogram>>& hists) {
    std::string out = open_svg(title);
    if (hists.empty()) return out + "</svg>\n";
    double lo = hists.front().second.lo, hi = hists.front().second.hi;
    std::size_t peak = 1;
    for (const auto& [name, h] : hists) {
        lo = std::min(lo, h.lo);
        hi = std::max(hi, h.hi);
        for (auto c : h.counts) peak = std::max(peak, c);
    }
    const Frame f{lo, hi, 0.0, static_cast<double>(peak)};
    out += axes(f, "value", "count");
    std::vector<std::string> names;
    for (std::size_t k = 0; k < hists.size(); ++k) {
        const auto& h = hists[k].second;
        names.push_back(hists[k].first);
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double a = h.lo + h.bin_width() * static_cast<double>(b);
            const double x0 = f.px(a), x1 = f.px(a + h.bin_width());
            const double y = f.py(static_cast<double>(h.counts[b]));
            out += "<rect x=\"" + num(x0) + "\" y=\"" + num(y) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
                   num(f.py(0.0) - y) + "\" fill=\"" + kPalette[k % 7] + "\" fill-opacity=\"0.5\"/>\n";
        }
    }
    return out + legend(names) + "</svg>\n";
}

std::string svg_lines(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series) {
    std::string out = open_svg(title);
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("svg_lines: x and y lengths differ");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!(x1 >= x0)) return out + "</svg>\n";
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const Frame f{x0, x1, y0, y1};
    out += axes(f, xlabel, ylabel);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < series.size(); ++k) {
        names.push_back(series[k].name);
        out += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[k % 7]) + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[k].x.size(); ++i)
            out += (i ? " " : "") + num(f.px(series[k].x[i])) + "," + num(f.py(series[k].y[i]));
        out += "\"/>\n";
    }
    return out + legend(names) + "</svg>\n";
}

std::string svg_heatmap(const std::string& title, const Eigen::MatrixXd& values) {
    std::string out = open_svg(title);
    if (values.size() == 0) return out + "</svg>\n";
    const double lo = values.minCoeff(), hi = values.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    const double side = std::min(kW - kL - kR, kH - kT - kB);
    const double cw = side / static_cast<double>(values.cols()), ch = side / static_cast<double>(values.rows());
    for (Index i = 0; i < values.rows(); ++i)
        for (Index j = 0; j < values.cols(); ++j) {
            const int g = static_cast<int>(std::lround(255.0 * (values(i, j) - lo) / span));
            char color[8];
            std::snprintf(color, sizeof color, "#%02x%02x%02x", g, g, g);
            out += "<rect x=\"" + num(kL + cw * static_cast<double>(j)) + "\" y=\"" + num(kT + ch * static_cast<double>(i)) +
                   "\" width=\"" + num(cw) + "\" height=\"" + num(ch) + "\" fill=\"" + color + "\"/>\n";
        }
    out += "<text x=\"" + num(kL + side + 8) + "\" y=\"" + num(kT + 10) + "\">max " + label_num(hi) + "</text>\n";
    out += "<text x=\"" + num(kL + side + 8) + "\" y=\"" + num(kT + side) + "\">min " + label_num(lo) + "</text>\n";
    return out + "</svg>\n";
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

struct Plot {
    std::string name;
    std::string svg;
};

struct Entry {
    json table;
    std::vector<Plot> plots;
};

std::vector<double> doubles(const json& j) { return j.get<std::vector<double>>(); }

Eigen::MatrixXd matrix(const json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw DataError("ragged matrix");
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
    }
    return m;
}

std::string accel_name(double a) { return label_num(a) + "x"; }

/// Histogram of paired differences per acceleration, titled with the share of improved slices.
void improvement_plots(Entry& e, const std::vector<double>& accels, const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b, const std::string& what) {
    if (a.size() != accels.size() || b.size() != accels.size()) throw DataError("per-slice SSIM lists do not match the accelerations");
    json summary = json::array();
    for (std::size_t i = 0; i < accels.size(); ++i) {
        if (a[i].size() != b[i].size()) throw DataError("per-slice SSIM lists differ in length");
        std::vector<double> d;
        std::size_t better = 0;
        for (std::size_t k = 0; k < a[i].size(); ++k) {
            d.push_back(a[i][k] - b[i][k]);
            if (d.back() > 0.0) ++better;
        }
        if (d.empty()) continue;
        const double share = static_cast<double>(better) / static_cast<double>(d.size());
        const auto h = histogram(d, 20);
        summary.push_back({{"acceleration", accels[i]}, {"improved_share", share}, {"histogram", to_json(h)}});
        e.plots.push_back({"improvement_" + accel_name(accels[i]),
                           svg_histograms(what + " SSIM gain at " + accel_name(accels[i]) + " (" +
                                              label_num(100.0 * share) + "% improved)",
                                          {{"difference", h}})});
    }
    e.table["improvement"] = summary;
}

Entry detector_entry(const json& r) {
    Entry e;
    const auto labels = r.at("labels").get<std::vector<int>>();
    const double threshold = r.value("threshold", 0.1);
    e.table = {{"kind", "detector"}, {"threshold", threshold}, {"samples", labels.size()}, {"scorers", json::object()}};
    std::vector<Series> rocs;
    for (const auto& [name, sj] : r.at("scores").items()) {
        const auto s = doubles(sj);
        if (s.size() != labels.size()) throw DataError("scores '" + name + "' do not match the labels");
        if (s.empty()) continue;
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < s.size(); ++i) (labels[i] ? pos : neg).push_back(s[i]);
        auto [mn, mx] = std::minmax_element(s.begin(), s.end());
        const double lo = *mn, hi = *mx > *mn ? *mx : *mn + 1.0;
        e.plots.push_back({"scores_" + name, svg_histograms("Scores: " + name, {{"nominal", histogram(neg, 30, lo, hi)},
                                                                               {"corrupted", histogram(pos, 30, lo, hi)}})});
        if (pos.empty() || neg.empty()) continue;
        auto rep = to_json(evaluate_classifier(s, labels, threshold));
        rep.erase("roc");
        e.table["scorers"][name] = rep;
        Series roc{name, {}, {}};
        for (const auto& p : roc_curve(s, labels)) {
            roc.x.push_back(p.fpr);
            roc.y.push_back(p.tpr);
        }
        rocs.push_back(roc);
    }
    if (!rocs.empty()) e.plots.push_back({"roc", svg_lines("ROC", "false positive rate", "true positive rate", rocs)});
    return e;
}

Entry autocorr_entry(const json& r) {
    Entry e;
    e.table = {{"kind", "autocorr"},
               {"size", r.at("size")},
               {"argmax_in_acs_fraction", r.at("argmax_in_acs_fraction")},
               {"phase_circular_variance", r.at("phase_circular_variance")}};
    e.plots.push_back({"magnitude", svg_heatmap("Line correlation magnitude", matrix(r.at("magnitude")))});
    e.plots.push_back({"phase", svg_heatmap("Line correlation phase", matrix(r.at("phase")))});
    std::vector<Series> cols;
    for (const auto& a : r.at("anchors")) {
        Series s{"line " + std::to_string(a.at("anchor").get<Index>()), {}, doubles(a.at("magnitude"))};
        for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i));
        cols.push_back(s);
    }
    if (!cols.empty()) e.plots.push_back({"anchors", svg_lines("Correlation with anchor lines", "column", "|C|", cols)});
    return e;
}

Entry sequential_entry(const json& r) {
    Entry e;
    e.table = {{"kind", "sequential"}, {"phase1", r.at("phase1")}, {"arms", json::array()}};
    std::vector<Series> curves;
    for (const auto& a : r.at("arms")) {
        json row = a;
        row.erase("task_a_curve");
        e.table["arms"].push_back(row);
        const auto& l = a.at("lambda");
        Series s{"lambda " + (l.is_string() ? l.get<std::string>() : label_num(l.get<double>())), {}, doubles(a.at("task_a_curve"))};
        for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i));
        curves.push_back(s);
    }
    if (!curves.empty()) e.plots.push_back({"forgetting", svg_lines("Task-A SSIM during task-B training", "epoch", "SSIM", curves)});
    return e;
}

Entry policy_entry(const json& r) {
    Entry e;
    const auto accels = doubles(r.at("accelerations"));
    e.table = {{"kind", "policy_comparison"}, {"accelerations", accels}, {"rows", r.at("rows")}};
    const auto& ss = r.value("slice_ssim", json::object());
    if (ss.contains("varnet_variable") && ss.contains("varnet_fixed"))
        improvement_plots(e, accels, ss.at("varnet_variable").get<std::vector<std::vector<double>>>(),
                          ss.at("varnet_fixed").get<std::vector<std::vector<double>>>(), "Variable vs fixed");
    return e;
}

Entry transfer_entry(const json& r) {
    Entry e;
    const auto accels = doubles(r.at("accelerations"));
    e.table = {{"kind", "transfer"}, {"accelerations", accels}, {"arms", json::array()}};
    std::map<std::string, std::vector<std::vector<double>>> per;
    for (const auto& a : r.at("arms")) {
        json row = a;
        row.erase("slice_ssim");
        e.table["arms"].push_back(row);
        if (a.value("available", true) && a.contains("slice_ssim"))
            per[a.at("pretraining").get<std::string>()] = a.at("slice_ssim").get<std::vector<std::vector<double>>>();
    }
    if (per.count("phantom") && per.count("finetune"))
        improvement_plots(e, accels, per["phantom"], per["finetune"], "Phantom vs fine-tune-set pre-training");
    return e;
}

Entry make_entry(const json& r) {
    if (!r.is_object() || !r.contains("kind") || !r.at("kind").is_string())
        throw DataError("report: every result needs a string \"kind\"");
    const auto kind = r.at("kind").get<std::string>();
    if (kind == "detector") return detector_entry(r);
    if (kind == "autocorr") return autocorr_entry(r);
    if (kind == "sequential") return sequential_entry(r);
    if (kind == "policy_comparison") return policy_entry(r);
    if (kind == "transfer") return transfer_entry(r);
    throw DataError("report: unknown result kind '" + kind + "'");
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const nlohmann::json& results, const std::filesystem::path& dir) {
    json list;
    if (results.is_object() && results.contains("results")) list = results.at("results");
    else if (results.is_array()) list = results;
    else list = json::array({results});
    if (!list.is_array()) throw DataError("report: \"results\" must be an array");

    std::vector<Entry> entries;
    try {
        for (const auto& r : list) entries.push_back(make_entry(r));
    } catch (const json::exception& e) {
        throw DataError(std::string("report: result does not match its schema: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("report: ") + e.what());
    }

    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    json report = {{"version", 1}, {"entries", json::array()}};
    for (std::size_t i = 0; i < entries.size(); ++i) {
        json files = json::array();
        for (const auto& p : entries[i].plots) {
            char prefix[32];
            std::snprintf(prefix, sizeof prefix, "%02zu_", i);
            const auto name = prefix + entries[i].table.at("kind").get<std::string>() + "_" + p.name + ".svg";
            std::ofstream(dir / name, std::ios::binary) << p.svg;
            written.push_back(dir / name);
            files.push_back(name);
        }
        json t = entries[i].table;
        t["plots"] = files;
        report["entries"].push_back(t);
    }
    std::ofstream(dir / "report.json", std::ios::binary) << report.dump(2) << "\n";
    written.push_back(dir / "report.json");
    return written;
}

}  // namespace kscope
