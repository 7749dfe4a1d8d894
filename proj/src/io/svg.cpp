#include "ebmgeo/io/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ebmgeo/common.hpp"

namespace ebmgeo::io {

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else
            out += c;
    }
    return out;
}

// A polygon vertex carrying the interpolated field value, for clipping
// against band edges.
struct ClipVertex {
    double x, y, f;
};

ClipVertex crossing(const ClipVertex& a, const ClipVertex& b, double level) {
    double s = (level - a.f) / (b.f - a.f);
    return {a.x + s * (b.x - a.x), a.y + s * (b.y - a.y), level};
}

// Sutherland-Hodgman against the half-plane keep_ge ? f >= level : f <= level.
// The field is linear along the original cell edges, which is exactly the
// marching-squares crossing rule; chords introduced by earlier clips reuse
// the same linear interpolation.
std::vector<ClipVertex> clip(const std::vector<ClipVertex>& poly, double level,
                             bool keep_ge) {
    std::vector<ClipVertex> out;
    out.reserve(poly.size() + 2);
    auto inside = [&](const ClipVertex& v) {
        return keep_ge ? v.f >= level : v.f <= level;
    };
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const ClipVertex& a = poly[i];
        const ClipVertex& b = poly[(i + 1) % poly.size()];
        if (inside(a)) {
            out.push_back(a);
            if (!inside(b)) out.push_back(crossing(a, b, level));
        } else if (inside(b)) {
            out.push_back(crossing(a, b, level));
        }
    }
    return out;
}

}  // namespace

SvgCanvas::SvgCanvas(double x_lo, double x_hi, double y_lo, double y_hi,
                     int width_px, int height_px)
    : x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi),
      w_(width_px), h_(height_px) {
    if (!(x_hi > x_lo) || !(y_hi > y_lo))
        throw ConfigError("svg: degenerate world box");
    if (width_px < 1 || height_px < 1)
        throw ConfigError("svg: viewport must be at least 1x1 px");
}

double SvgCanvas::px(double x) const {
    return (x - x_lo_) / (x_hi_ - x_lo_) * w_;
}

double SvgCanvas::py(double y) const {
    return h_ - (y - y_lo_) / (y_hi_ - y_lo_) * h_;
}

void SvgCanvas::add_isobands(const Eigen::MatrixXd& field,
                             const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                             const std::vector<double>& levels,
                             const std::vector<std::string>& fills) {
    const Eigen::Index ny = field.rows(), nx = field.cols();
    if (xs.size() != nx || ys.size() != ny)
        throw ShapeError("svg: grid axes do not match the field: field " +
                         shape_str(ny, nx) + ", xs " +
                         std::to_string(xs.size()) + ", ys " +
                         std::to_string(ys.size()));
    if (nx < 2 || ny < 2) throw ConfigError("svg: iso-band grid needs >= 2x2 nodes");
    if (levels.size() < 2 || fills.size() + 1 != levels.size())
        throw ConfigError("svg: need ascending levels with one fill per band");
    for (std::size_t b = 0; b + 1 < levels.size(); ++b)
        if (!(levels[b] < levels[b + 1]))
            throw ConfigError("svg: iso-band levels must be strictly ascending");

    for (std::size_t b = 0; b + 1 < levels.size(); ++b) {
        const double lo = levels[b], hi = levels[b + 1];
        std::string d;
        auto emit_rect = [&](Eigen::Index i, Eigen::Index j0, Eigen::Index j1) {
            // Cells j0..j1 of row i lie entirely inside the band.
            d += "M" + fmt2(px(xs[j0])) + " " + fmt2(py(ys[i])) +
                 "L" + fmt2(px(xs[j1 + 1])) + " " + fmt2(py(ys[i])) +
                 "L" + fmt2(px(xs[j1 + 1])) + " " + fmt2(py(ys[i + 1])) +
                 "L" + fmt2(px(xs[j0])) + " " + fmt2(py(ys[i + 1])) + "Z";
        };
        for (Eigen::Index i = 0; i + 1 < ny; ++i) {
            Eigen::Index run = -1;
            for (Eigen::Index j = 0; j + 1 < nx; ++j) {
                const double f00 = field(i, j), f01 = field(i, j + 1);
                const double f10 = field(i + 1, j), f11 = field(i + 1, j + 1);
                const double cmin = std::min({f00, f01, f10, f11});
                const double cmax = std::max({f00, f01, f10, f11});
                const bool full = cmin >= lo && cmax <= hi;
                if (full) {
                    if (run < 0) run = j;
                    continue;
                }
                if (run >= 0) {
                    emit_rect(i, run, j - 1);
                    run = -1;
                }
                if (cmax < lo || cmin > hi) continue;  // band misses the cell
                std::vector<ClipVertex> poly = {{xs[j], ys[i], f00},
                                                {xs[j + 1], ys[i], f01},
                                                {xs[j + 1], ys[i + 1], f11},
                                                {xs[j], ys[i + 1], f10}};
                poly = clip(poly, lo, /*keep_ge=*/true);
                poly = clip(poly, hi, /*keep_ge=*/false);
                if (poly.size() < 3) continue;
                d += "M" + fmt2(px(poly[0].x)) + " " + fmt2(py(poly[0].y));
                for (std::size_t k = 1; k < poly.size(); ++k)
                    d += "L" + fmt2(px(poly[k].x)) + " " + fmt2(py(poly[k].y));
                d += "Z";
            }
            if (run >= 0) emit_rect(i, run, nx - 2);
        }
        if (!d.empty())
            body_ += "<path fill=\"" + fills[b] + "\" stroke=\"none\" d=\"" + d +
                     "\"/>\n";
    }
}

void SvgCanvas::add_polyline(const Eigen::MatrixXd& pts, const std::string& stroke,
                             double stroke_width) {
    if (pts.cols() != 2)
        throw ShapeError("svg: polyline points must be [N, 2], got " +
                         shape_str(pts.rows(), pts.cols()));
    if (pts.rows() < 2) throw ConfigError("svg: polyline needs >= 2 points");
    std::string points;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        if (i) points += " ";
        points += fmt2(px(pts(i, 0))) + "," + fmt2(py(pts(i, 1)));
    }
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
             fmt2(stroke_width) + "\" points=\"" + points + "\"/>\n";
}

void SvgCanvas::add_scatter(const Eigen::MatrixXd& pts, double radius_px,
                            const std::string& fill, double opacity) {
    if (pts.cols() != 2)
        throw ShapeError("svg: scatter points must be [N, 2], got " +
                         shape_str(pts.rows(), pts.cols()));
    body_ += "<g fill=\"" + fill + "\" fill-opacity=\"" + fmt2(opacity) + "\">\n";
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        body_ += "<circle cx=\"" + fmt2(px(pts(i, 0))) + "\" cy=\"" +
                 fmt2(py(pts(i, 1))) + "\" r=\"" + fmt2(radius_px) + "\"/>\n";
    body_ += "</g>\n";
}

void SvgCanvas::add_text(double x, double y, const std::string& text,
                         const std::string& fill) {
    body_ += "<text x=\"" + fmt2(px(x)) + "\" y=\"" + fmt2(py(y)) +
             "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + fill +
             "\">" + escape_xml(text) + "</text>\n";
}

std::string SvgCanvas::str() const {
    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(w_) + "\" height=\"" + std::to_string(h_) +
           "\" viewBox=\"0 0 " + std::to_string(w_) + " " + std::to_string(h_) +
           "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    out += body_;
    out += "</svg>\n";
    return out;
}

void SvgCanvas::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << str();
}

std::vector<double> linspace_levels(double lo, double hi, int bands) {
    if (bands < 1) throw ConfigError("svg: need at least one band");
    if (!(hi > lo)) throw ConfigError("svg: band range must be increasing");
    std::vector<double> levels(bands + 1);
    for (int i = 0; i <= bands; ++i)
        levels[i] = lo + (hi - lo) * static_cast<double>(i) / bands;
    return levels;
}

std::vector<std::string> gray_band_fills(int bands, double dark, double light) {
    std::vector<std::string> fills;
    fills.reserve(bands);
    for (int i = 0; i < bands; ++i) {
        double t = bands == 1 ? 0.0 : static_cast<double>(i) / (bands - 1);
        int g = static_cast<int>(std::lround(255.0 * (dark + (light - dark) * t)));
        g = std::clamp(g, 0, 255);
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", g, g, g);
        fills.emplace_back(buf);
    }
    return fills;
}

long count_polyline_points(const std::string& svg_text) {
    long count = 0;
    std::size_t pos = 0;
    while ((pos = svg_text.find("<polyline", pos)) != std::string::npos) {
        std::size_t attr = svg_text.find("points=\"", pos);
        std::size_t end = svg_text.find('>', pos);
        if (attr == std::string::npos || attr > end) {
            pos = end == std::string::npos ? svg_text.size() : end;
            continue;
        }
        attr += 8;
        std::size_t close = svg_text.find('"', attr);
        std::size_t at = attr;
        while (at < close) {
            std::size_t sp = std::min(svg_text.find(' ', at), close);
            if (svg_text.find(',', at) < sp) ++count;
            at = sp + 1;
        }
        pos = close;
    }
    return count;
}

}  // namespace ebmgeo::io
