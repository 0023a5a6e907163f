#include "luq/svg.hpp"

#include "luq/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace luq {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void settle() {
        if (!(lo <= hi)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.04 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

// round tick step: 1, 2 or 5 times a power of ten
double tick_step(double span) {
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0})
        if (raw <= m * mag) return m * mag;
    return 10.0 * mag;
}

std::string tick_label(double v, double step) {
    char buf[32];
    const int decimals = std::max(0, -static_cast<int>(std::floor(std::log10(step))));
    std::snprintf(buf, sizeof buf, "%.*f", decimals, std::abs(v) < step * 1e-9 ? 0.0 : v);
    return buf;
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
    for (const auto& s : spec.series)
        if (s.x.size() != s.y.size()) fail(Errc::DimMismatch, "plot series '" + s.label + "': x/y lengths differ");
    for (const auto& b : spec.bands) {
        if (b.x.size() != b.lower.size() || b.x.size() != b.upper.size()) {
            fail(Errc::DimMismatch, "plot band '" + b.label + "': lengths differ");
        }
    }
    Range xr, yr;
    for (const auto& s : spec.series) {
        for (double v : s.x) xr.add(v);
        for (double v : s.y) yr.add(v);
    }
    for (const auto& b : spec.bands) {
        for (double v : b.x) xr.add(v);
        for (double v : b.lower) yr.add(v);
        for (double v : b.upper) yr.add(v);
    }
    xr.settle();
    yr.settle();

    const double left = 70, right = 20, top = 40, bottom = 55;
    const double pw = spec.width - left - right;
    const double ph = spec.height - top - bottom;
    auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return top + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(spec.width) + "\" height=\"" +
           num(spec.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(spec.width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(spec.title) + "</text>\n";
    for (const auto& [a, b] : spec.shaded_x) {
        const double x0 = std::clamp(px(a), left, left + pw);
        const double x1 = std::clamp(px(b), left, left + pw);
        out += "<rect x=\"" + num(x0) + "\" y=\"" + num(top) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
               num(ph) + "\" fill=\"#dddddd\"/>\n";
    }

    const double xs = tick_step(xr.hi - xr.lo);
    for (double t = std::ceil(xr.lo / xs) * xs; t <= xr.hi; t += xs) {
        out += "<line x1=\"" + num(px(t)) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(px(t)) + "\" y2=\"" +
               num(top + ph + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(px(t)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" +
               tick_label(t, xs) + "</text>\n";
    }
    const double ys = tick_step(yr.hi - yr.lo);
    for (double t = std::ceil(yr.lo / ys) * ys; t <= yr.hi; t += ys) {
        out += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(py(t)) + "\" x2=\"" + num(left) + "\" y2=\"" +
               num(py(t)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(left - 8) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\">" +
               tick_label(t, ys) + "</text>\n";
    }
    out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
    out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(spec.height - 12) + "\" text-anchor=\"middle\">" +
           escape(spec.x_label) + "</text>\n";
    out += "<text transform=\"translate(16," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           escape(spec.y_label) + "</text>\n";

    for (const auto& b : spec.bands) {
        std::string upper_path, lower_path;
        for (std::size_t i = 0; i < b.x.size(); ++i) {
            if (!std::isfinite(b.x[i]) || !std::isfinite(b.lower[i]) || !std::isfinite(b.upper[i])) continue;
            upper_path += (upper_path.empty() ? "M" : " L") + num(px(b.x[i])) + "," + num(py(b.upper[i]));
        }
        for (std::size_t i = b.x.size(); i-- > 0;) {
            if (!std::isfinite(b.x[i]) || !std::isfinite(b.lower[i]) || !std::isfinite(b.upper[i])) continue;
            lower_path += " L" + num(px(b.x[i])) + "," + num(py(b.lower[i]));
        }
        if (!upper_path.empty()) {
            out += "<path d=\"" + upper_path + lower_path + " Z\" fill=\"" + b.color +
                   "\" fill-opacity=\"0.3\" stroke=\"none\"/>\n";
        }
    }
    for (const auto& s : spec.series) {
        std::string path;
        bool pen_down = false;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                pen_down = false;
                continue;
            }
            path += (pen_down ? " L" : " M") + num(px(s.x[i])) + "," + num(py(s.y[i]));
            pen_down = true;
            if (s.markers) {
                out += "<circle cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) + "\" r=\"3\" fill=\"" +
                       s.color + "\"/>\n";
            }
        }
        if (!path.empty()) {
            out += "<path d=\"" + path.substr(1) + "\" fill=\"none\" stroke=\"" + s.color +
                   "\" stroke-width=\"1.6\"/>\n";
        }
    }

    double ly = top + 14;
    auto legend = [&](const std::string& label, const std::string& color) {
        if (label.empty()) return;
        out += "<rect x=\"" + num(left + pw - 150) + "\" y=\"" + num(ly - 9) + "\" width=\"12\" height=\"10\" fill=\"" +
               color + "\"/>\n";
        out += "<text x=\"" + num(left + pw - 132) + "\" y=\"" + num(ly) + "\">" + escape(label) + "</text>\n";
        ly += 16;
    };
    for (const auto& b : spec.bands) legend(b.label, b.color);
    for (const auto& s : spec.series) legend(s.label, s.color);
    out += "</svg>\n";
    return out;
}

}  // namespace luq
