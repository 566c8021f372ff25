#include "nlsa/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nlsa/errors.hpp"

namespace nlsa::io {

std::string format_number(double x) {
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos)
        return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"')
            out += '"';
        out += ch;
    }
    return out + "\"";
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : out_(path, std::ios::binary), header_(std::move(header)) {
    if (!out_)
        throw Error("cannot open " + path.string() + " for writing");
    text_row(header_);
    rows_ = 0;
}

void CsvWriter::row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> fields;
    fields.reserve(values.size());
    for (double v : values)
        fields.push_back(format_number(v));
    text_row(fields);
}

void CsvWriter::text_row(const std::vector<std::string>& fields) {
    if (fields.size() != header_.size())
        throw InvalidParameter("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(header_.size()));
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            out_ << ',';
        out_ << csv_escape(fields[i]);
    }
    out_ << '\n';
    ++rows_;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << text;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kMarginLeft = 70.0, kMarginRight = 20.0, kMarginTop = 30.0, kMarginBottom = 48.0;

std::string fmt(double x, int digits = 2) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string tick_label(double x) {
    char buf[48];
    if (x != 0.0 && (std::abs(x) < 1e-3 || std::abs(x) >= 1e4))
        std::snprintf(buf, sizeof buf, "%.0e", x);
    else
        std::snprintf(buf, sizeof buf, "%.6g", std::abs(x) < 1e-12 ? 0.0 : x);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

std::vector<double> nice_ticks(double lo, double hi) {
    const double span = hi - lo;
    if (!(span > 0))
        return {lo};
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    std::vector<double> t;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
        t.push_back(v);
    return t;
}

struct Frame {
    double x0, y0, w, h;
    double xmin, xmax, ymin, ymax;
    bool log_y;

    double ty(double y) const { return log_y ? std::log10(y) : y; }
    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const { return y0 + h - (ty(y) - ymin) / (ymax - ymin) * h; }
};

std::array<double, 4> fit_limits(const Panel& p) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto take = [&](double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y) || (p.log_y && y <= 0))
            return;
        const double yy = p.log_y ? std::log10(y) : y;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, yy);
        ymax = std::max(ymax, yy);
    };
    for (const auto& s : p.series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
            take(s.x[i], s.y[i]);
    for (const auto& m : p.markers)
        take(m.x, m.y);
    if (!std::isfinite(xmin))
        return {0.0, 1.0, 0.0, 1.0};
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pad = 0.04 * (ymax - ymin);
    return {xmin, xmax, ymin - pad, ymax + pad};
}

void render_marker(std::ostringstream& os, const Frame& f, const Marker& m) {
    if (!std::isfinite(m.x) || !std::isfinite(m.y))
        return;
    const double cx = f.px(m.x), cy = f.py(m.y), r = m.size;
    const std::string fill = m.filled ? m.color : "white";
    switch (m.glyph) {
    case Glyph::circle:
        os << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(r) << "\" fill=\"" << fill
           << "\" stroke=\"" << m.color << "\" stroke-width=\"1.2\"/>\n";
        break;
    case Glyph::square:
        os << "<rect x=\"" << fmt(cx - r) << "\" y=\"" << fmt(cy - r) << "\" width=\"" << fmt(2 * r)
           << "\" height=\"" << fmt(2 * r) << "\" fill=\"" << fill << "\" stroke=\"" << m.color
           << "\" stroke-width=\"1.2\"/>\n";
        break;
    case Glyph::triangle:
        os << "<polygon points=\"" << fmt(cx) << ',' << fmt(cy - r) << ' ' << fmt(cx - r) << ',' << fmt(cy + r)
           << ' ' << fmt(cx + r) << ',' << fmt(cy + r) << "\" fill=\"" << fill << "\" stroke=\"" << m.color
           << "\" stroke-width=\"1.2\"/>\n";
        break;
    case Glyph::cross:
        os << "<path d=\"M" << fmt(cx - r) << ',' << fmt(cy - r) << "L" << fmt(cx + r) << ',' << fmt(cy + r) << "M"
           << fmt(cx - r) << ',' << fmt(cy + r) << "L" << fmt(cx + r) << ',' << fmt(cy - r) << "\" stroke=\""
           << m.color << "\" stroke-width=\"2\" fill=\"none\"/>\n";
        break;
    }
    if (!m.label.empty())
        os << "<text x=\"" << fmt(cx + r + 3) << "\" y=\"" << fmt(cy - r - 2) << "\" font-size=\"11\">"
           << xml_escape(m.label) << "</text>\n";
}

void render_panel(std::ostringstream& os, const Panel& p, double ox, double oy, double pw, double ph, int id) {
    const auto lim = p.limits.value_or(fit_limits(p));
    Frame f{ox + kMarginLeft, oy + kMarginTop, pw - kMarginLeft - kMarginRight, ph - kMarginTop - kMarginBottom,
            lim[0], lim[1], lim[2], lim[3], p.log_y};
    if (p.limits && p.log_y) {
        f.ymin = std::log10(std::max(lim[2], 1e-300));
        f.ymax = std::log10(std::max(lim[3], 1e-300));
    }

    os << "<g>\n<clipPath id=\"clip" << id << "\"><rect x=\"" << fmt(f.x0) << "\" y=\"" << fmt(f.y0)
       << "\" width=\"" << fmt(f.w) << "\" height=\"" << fmt(f.h) << "\"/></clipPath>\n";
    os << "<rect x=\"" << fmt(f.x0) << "\" y=\"" << fmt(f.y0) << "\" width=\"" << fmt(f.w) << "\" height=\""
       << fmt(f.h) << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";

    for (double t : nice_ticks(f.xmin, f.xmax)) {
        const double x = f.px(t);
        os << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(f.y0 + f.h) << "\" x2=\"" << fmt(x) << "\" y2=\""
           << fmt(f.y0 + f.h + 5) << "\" stroke=\"#333\"/>\n";
        os << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(f.y0 + f.h + 18) << "\" font-size=\"11\" "
           << "text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
    }
    for (double t : nice_ticks(f.ymin, f.ymax)) {
        const double y = f.y0 + f.h - (t - f.ymin) / (f.ymax - f.ymin) * f.h;
        os << "<line x1=\"" << fmt(f.x0 - 5) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(f.x0) << "\" y2=\""
           << fmt(y) << "\" stroke=\"#333\"/>\n";
        const std::string label = p.log_y ? "1e" + tick_label(t) : tick_label(t);
        os << "<text x=\"" << fmt(f.x0 - 8) << "\" y=\"" << fmt(y + 4) << "\" font-size=\"11\" "
           << "text-anchor=\"end\">" << label << "</text>\n";
    }
    if (!p.title.empty())
        os << "<text x=\"" << fmt(f.x0 + f.w / 2) << "\" y=\"" << fmt(oy + 18) << "\" font-size=\"13\" "
           << "text-anchor=\"middle\">" << xml_escape(p.title) << "</text>\n";
    if (!p.xlabel.empty())
        os << "<text x=\"" << fmt(f.x0 + f.w / 2) << "\" y=\"" << fmt(oy + ph - 8) << "\" font-size=\"12\" "
           << "text-anchor=\"middle\">" << xml_escape(p.xlabel) << "</text>\n";
    if (!p.ylabel.empty()) {
        const double yx = ox + 16, yy = f.y0 + f.h / 2;
        os << "<text x=\"" << fmt(yx) << "\" y=\"" << fmt(yy) << "\" font-size=\"12\" text-anchor=\"middle\" "
           << "transform=\"rotate(-90 " << fmt(yx) << ' ' << fmt(yy) << ")\">" << xml_escape(p.ylabel)
           << "</text>\n";
    }

    os << "<g clip-path=\"url(#clip" << id << ")\">\n";
    for (const auto& s : p.series) {
        std::string d;
        bool pen_down = false;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            const bool ok = std::isfinite(s.x[i]) && std::isfinite(s.y[i]) && (!p.log_y || s.y[i] > 0);
            if (!ok) {
                pen_down = false;
                continue;
            }
            d += pen_down ? 'L' : 'M';
            d += fmt(f.px(s.x[i])) + ',' + fmt(f.py(s.y[i]));
            pen_down = true;
        }
        if (d.empty())
            continue;
        os << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << fmt(s.width)
           << "\"";
        if (!s.dash.empty())
            os << " stroke-dasharray=\"" << s.dash << "\"";
        os << "/>\n";
    }
    for (const auto& m : p.markers)
        render_marker(os, f, m);
    os << "</g>\n";

    // legend
    double ly = f.y0 + 14;
    for (const auto& s : p.series) {
        if (s.label.empty())
            continue;
        const double lx = f.x0 + f.w - 165;
        os << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(lx + 24) << "\" y2=\""
           << fmt(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"" << fmt(s.width) << "\"";
        if (!s.dash.empty())
            os << " stroke-dasharray=\"" << s.dash << "\"";
        os << "/>\n<text x=\"" << fmt(lx + 30) << "\" y=\"" << fmt(ly) << "\" font-size=\"11\">"
           << xml_escape(s.label) << "</text>\n";
        ly += 15;
    }
    os << "</g>\n";
}

}  // namespace

Figure::Figure(int rows, int cols, double panel_width, double panel_height)
    : rows_(rows), cols_(cols), width_(panel_width), height_(panel_height),
      panels_(static_cast<std::size_t>(rows * cols)) {
    if (rows < 1 || cols < 1)
        throw InvalidParameter("figure needs at least one panel");
}

Panel& Figure::panel(int row, int col) { return panels_.at(static_cast<std::size_t>(row * cols_ + col)); }

std::string Figure::render() const {
    std::ostringstream os;
    const double W = width_ * cols_, H = height_ * rows_;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(W, 0) << "\" height=\"" << fmt(H, 0)
       << "\" viewBox=\"0 0 " << fmt(W, 0) << ' ' << fmt(H, 0) << "\" font-family=\"sans-serif\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c)
            render_panel(os, panels_[static_cast<std::size_t>(r * cols_ + c)], c * width_, r * height_, width_,
                         height_, r * cols_ + c);
    os << "</svg>\n";
    return os.str();
}

void Figure::save(const std::filesystem::path& path) const { write_text(path, render()); }

Series contour(const std::vector<double>& x, const std::vector<double>& y, const std::vector<std::vector<double>>& z,
               double level) {
    Series s;
    const std::size_t nx = x.size(), ny = y.size();
    if (z.size() != nx)
        throw InvalidParameter("contour grid does not match the x axis");
    for (const auto& col : z)
        if (col.size() != ny)
            throw InvalidParameter("contour grid does not match the y axis");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto edge_point = [&](std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1) {
        const double a = z[i0][j0] - level, b = z[i1][j1] - level;
        const double t = a == b ? 0.5 : a / (a - b);
        return std::pair{x[i0] + t * (x[i1] - x[i0]), y[j0] + t * (y[j1] - y[j0])};
    };
    auto emit = [&](std::pair<double, double> p, std::pair<double, double> q) {
        s.x.insert(s.x.end(), {p.first, q.first, nan});
        s.y.insert(s.y.end(), {p.second, q.second, nan});
    };
    for (std::size_t i = 0; i + 1 < nx; ++i) {
        for (std::size_t j = 0; j + 1 < ny; ++j) {
            // corners counter-clockwise: 0 (i,j) 1 (i+1,j) 2 (i+1,j+1) 3 (i,j+1)
            const int mask = (z[i][j] > level) | (z[i + 1][j] > level) << 1 | (z[i + 1][j + 1] > level) << 2 |
                             (z[i][j + 1] > level) << 3;
            if (mask == 0 || mask == 15)
                continue;
            const auto e0 = [&] { return edge_point(i, j, i + 1, j); };
            const auto e1 = [&] { return edge_point(i + 1, j, i + 1, j + 1); };
            const auto e2 = [&] { return edge_point(i, j + 1, i + 1, j + 1); };
            const auto e3 = [&] { return edge_point(i, j, i, j + 1); };
            switch (mask) {
            case 1: case 14: emit(e3(), e0()); break;
            case 2: case 13: emit(e0(), e1()); break;
            case 3: case 12: emit(e3(), e1()); break;
            case 4: case 11: emit(e1(), e2()); break;
            case 6: case 9: emit(e0(), e2()); break;
            case 7: case 8: emit(e3(), e2()); break;
            case 5: case 10: {
                const double centre = 0.25 * (z[i][j] + z[i + 1][j] + z[i + 1][j + 1] + z[i][j + 1]);
                const bool joined = (centre > level) == (mask == 5);
                if (joined) {
                    emit(e3(), e2());
                    emit(e0(), e1());
                } else {
                    emit(e3(), e0());
                    emit(e1(), e2());
                }
                break;
            }
            default: break;
            }
        }
    }
    return s;
}

std::vector<double> contour_levels(const std::vector<std::vector<double>>& z, int count) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& col : z)
        for (double v : col)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    std::vector<double> levels;
    if (count < 1 || !(hi > lo))
        return levels;
    for (int k = 1; k <= count; ++k)
        levels.push_back(lo + (hi - lo) * k / (count + 1));
    return levels;
}

}  // namespace nlsa::io
