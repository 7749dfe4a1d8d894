// Deterministic SVG emission for the figure commands: filled iso-band
// backgrounds computed from a scalar grid, polyline curves, and point
// scatters.  All coordinates go through fixed-precision formatting and
// the markup carries no timestamps, so identical inputs produce
// byte-identical files.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ebmgeo::io {

class SvgCanvas {
  public:
    // World box [x_lo, x_hi] x [y_lo, y_hi] mapped onto a pixel viewport
    // (y axis flipped so world "up" renders up).
    SvgCanvas(double x_lo, double x_hi, double y_lo, double y_hi,
              int width_px = 640, int height_px = 640);

    // field(i, j) = f(xs[j], ys[i]).  levels must be ascending band edges;
    // fills.size() == levels.size() - 1.  Each band becomes one <path>
    // whose interior cells are merged into row-run rectangles and whose
    // boundary cells are clipped to the band by linear interpolation
    // along cell edges (marching-squares style).
    void add_isobands(const Eigen::MatrixXd& field, const Eigen::VectorXd& xs,
                      const Eigen::VectorXd& ys, const std::vector<double>& levels,
                      const std::vector<std::string>& fills);

    // pts is [N, 2]; one <polyline> with N points.
    void add_polyline(const Eigen::MatrixXd& pts, const std::string& stroke,
                      double stroke_width = 1.5);

    void add_scatter(const Eigen::MatrixXd& pts, double radius_px,
                     const std::string& fill, double opacity = 1.0);

    // Label anchored at a world position.
    void add_text(double x, double y, const std::string& text,
                  const std::string& fill = "#000000");

    std::string str() const;
    void write(const std::string& path) const;

  private:
    double px(double x) const;
    double py(double y) const;

    double x_lo_, x_hi_, y_lo_, y_hi_;
    int w_, h_;
    std::string body_;
};

// bands + 1 equally spaced edges covering [lo, hi].
std::vector<double> linspace_levels(double lo, double hi, int bands);

// Grayscale fills from dark to light (for ascending -log p bands: the
// densest band renders darkest).
std::vector<std::string> gray_band_fills(int bands, double dark = 0.25,
                                         double light = 0.97);

// Total "x,y" pairs across every <polyline> element; figure tests
// re-parse emitted files with this to compare against CSV row counts.
long count_polyline_points(const std::string& svg_text);

}  // namespace ebmgeo::io
