#pragma once

// Static SVG figures: top-view overlay of forms, input bar chart, per-node
// error map and error histograms. Output is a pure function of the inputs.

#include "scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace cablenet {

namespace svg {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string open(double w, double h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "start") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"" +
           anchor + "\">" + s + "</text>\n";
}

// Maps world x/y onto a canvas with a margin, keeping the aspect ratio.
struct Frame {
    double x0, y0, k, margin, height;
    double px(double x) const { return margin + k * (x - x0); }
    double py(double y) const { return height - margin - k * (y - y0); }
};

inline Frame fit(const std::vector<Vec3>& pts, double width, double height, double margin) {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!pts.empty()) {
        xmin = xmax = pts[0].x();
        ymin = ymax = pts[0].y();
        for (const auto& p : pts) {
            xmin = std::min(xmin, p.x());
            xmax = std::max(xmax, p.x());
            ymin = std::min(ymin, p.y());
            ymax = std::max(ymax, p.y());
        }
    }
    const double sx = xmax > xmin ? (width - 2 * margin) / (xmax - xmin) : 1.0;
    const double sy = ymax > ymin ? (height - 2 * margin) / (ymax - ymin) : 1.0;
    return {xmin, ymin, std::min(sx, sy), margin, height};
}

} // namespace svg

/// Top view of the initial, target and controlled forms. Free-node offsets
/// from the target are multiplied by `scale` before drawing; one
/// <polyline> per edge and form, grouped by class.
inline std::string overlay_svg(const CableNet& net, const Coords& r_ini, const Coords& r_des, const Coords& r_con,
                               double scale = 5.0) {
    auto exaggerate = [&](const Coords& r) -> Coords { return r_des + scale * (r - r_des); };
    const Coords forms[3] = {exaggerate(r_ini), r_des, exaggerate(r_con)};
    const char* names[3] = {"initial", "target", "controlled"};
    const char* colors[3] = {"#999999", "#1f77b4", "#d62728"};

    std::vector<Vec3> pts(net.boundary_coords());
    for (const auto& r : forms)
        for (Index s = 0; s < net.n_free(); ++s) pts.push_back(r.segment<3>(3 * s));
    const double w = 640, h = 480;
    const auto fr = svg::fit(pts, w, h, 40);

    std::string out = svg::open(w, h);
    out += svg::text(10, 20, "top view, offsets from target x" + svg::num(scale));
    for (int f = 0; f < 3; ++f) {
        out += std::string("<g class=\"") + names[f] + "\" stroke=\"" + colors[f] + "\" fill=\"none\">\n";
        for (const auto& e : net.edges()) {
            const Vec3 a = net.position(forms[f], e.s), b = net.position(forms[f], e.t);
            out += "<polyline points=\"" + svg::num(fr.px(a.x())) + "," + svg::num(fr.py(a.y())) + " " +
                   svg::num(fr.px(b.x())) + "," + svg::num(fr.py(b.y())) + "\"/>\n";
        }
        out += "</g>\n";
        out += "<text x=\"" + svg::num(w - 110) + "\" y=\"" + svg::num(20 + 16 * f) + "\" fill=\"" + colors[f] +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + names[f] + "</text>\n";
    }
    return out + "</svg>\n";
}

/// Bar per boundary edge with |u_i| > zero_threshold; positive inputs shorten
/// the edge, negative ones lengthen it.
inline std::string input_bars_svg(const Inputs& u, double zero_threshold) {
    const double w = 640, h = 320, m = 40;
    const double umax = std::max(u.size() ? u.cwiseAbs().maxCoeff() : 0.0, zero_threshold);
    const double slot = u.size() ? (w - 2 * m) / static_cast<double>(u.size()) : 1.0;
    const double mid = h / 2, k = (h / 2 - m) / umax;
    std::string out = svg::open(w, h);
    out += svg::text(10, 20, "boundary inputs [mm] (max " + svg::num(1e3 * umax) + ")");
    out += "<line x1=\"" + svg::num(m) + "\" y1=\"" + svg::num(mid) + "\" x2=\"" + svg::num(w - m) + "\" y2=\"" +
           svg::num(mid) + "\" stroke=\"black\"/>\n";
    for (Index i = 0; i < u.size(); ++i) {
        if (!(std::abs(u[i]) > zero_threshold)) continue;
        const bool shortened = u[i] > 0.0;
        const double bh = k * std::abs(u[i]);
        out += std::string("<rect class=\"bar ") + (shortened ? "shortened" : "lengthened") + "\" data-index=\"" +
               std::to_string(i) + "\" x=\"" + svg::num(m + slot * (static_cast<double>(i) + 0.1)) + "\" y=\"" +
               svg::num(shortened ? mid - bh : mid) + "\" width=\"" + svg::num(0.8 * slot) + "\" height=\"" +
               svg::num(bh) + "\" fill=\"" + (shortened ? "#d62728" : "#1f77b4") + "\"/>\n";
    }
    out += svg::text(w - m, 36, "shortened", "end") + svg::text(w - m, h - 12, "lengthened", "end");
    return out + "</svg>\n";
}

/// Free nodes at their target positions, shaded by error magnitude.
inline std::string error_heatmap_svg(const CableNet& net, const Coords& r_des, const Eigen::VectorXd& per_node_err) {
    std::vector<Vec3> pts(net.boundary_coords());
    for (Index s = 0; s < net.n_free(); ++s) pts.push_back(r_des.segment<3>(3 * s));
    const double w = 640, h = 480;
    const auto fr = svg::fit(pts, w, h, 40);
    const double emax = per_node_err.size() ? per_node_err.maxCoeff() : 0.0;
    std::string out = svg::open(w, h);
    out += svg::text(10, 20, "per-node error [mm], max " + svg::num(1e3 * emax));
    for (const auto& e : net.edges()) {
        const Vec3 a = net.position(r_des, e.s), b = net.position(r_des, e.t);
        out += "<line x1=\"" + svg::num(fr.px(a.x())) + "\" y1=\"" + svg::num(fr.py(a.y())) + "\" x2=\"" +
               svg::num(fr.px(b.x())) + "\" y2=\"" + svg::num(fr.py(b.y())) + "\" stroke=\"#cccccc\"/>\n";
    }
    for (Index s = 0; s < net.n_free(); ++s) {
        const double t = emax > 0.0 ? per_node_err[s] / emax : 0.0;
        const int red = static_cast<int>(std::lround(255 * t)), blue = 255 - red;
        char color[16];
        std::snprintf(color, sizeof color, "#%02x40%02x", red, blue);
        const Vec3 p = r_des.segment<3>(3 * s);
        out += "<circle class=\"node\" data-node=\"" + std::to_string(s) + "\" data-error=\"" +
               svg::num(per_node_err[s]) + "\" cx=\"" + svg::num(fr.px(p.x())) + "\" cy=\"" + svg::num(fr.py(p.y())) +
               "\" r=\"6\" fill=\"" + color + "\"/>\n";
    }
    return out + "</svg>\n";
}

/// Side-by-side histograms of per-node errors before and after control,
/// sharing one bin width (default: max error / 10).
inline std::string error_histograms_svg(const Eigen::VectorXd& before, const Eigen::VectorXd& after,
                                        double bin_width = 0.0) {
    const double emax = std::max(before.size() ? before.maxCoeff() : 0.0, after.size() ? after.maxCoeff() : 0.0);
    if (!(bin_width > 0.0)) bin_width = emax > 0.0 ? emax / 10.0 : 1e-6;
    const std::vector<Index> hb = histogram(before, bin_width), ha = histogram(after, bin_width);
    Index cmax = 1;
    for (Index c : hb) cmax = std::max(cmax, c);
    for (Index c : ha) cmax = std::max(cmax, c);
    const std::size_t bins = std::max(hb.size(), ha.size());

    const double w = 720, h = 320, m = 40, panel = (w - 3 * m) / 2;
    std::string out = svg::open(w, h);
    auto draw = [&](const std::vector<Index>& counts, double x0, const char* cls, const char* title) {
        std::string s = svg::text(x0, 20, title);
        s += std::string("<g class=\"") + cls + "\">\n";
        const double bw = bins ? panel / static_cast<double>(bins) : panel;
        for (std::size_t b = 0; b < counts.size(); ++b) {
            const double bh = (h - 2 * m) * static_cast<double>(counts[b]) / static_cast<double>(cmax);
            s += "<rect class=\"hist-bar\" data-count=\"" + std::to_string(counts[b]) + "\" x=\"" +
                 svg::num(x0 + bw * static_cast<double>(b)) + "\" y=\"" + svg::num(h - m - bh) + "\" width=\"" +
                 svg::num(0.9 * bw) + "\" height=\"" + svg::num(bh) + "\" fill=\"#1f77b4\"/>\n";
        }
        return s + "</g>\n";
    };
    out += draw(hb, m, "before", "before control");
    out += draw(ha, 2 * m + panel, "after", "after control");
    out += svg::text(w / 2, h - 10, "per-node error, bin width " + svg::num(1e3 * bin_width) + " mm", "middle");
    return out + "</svg>\n";
}

} // namespace cablenet
