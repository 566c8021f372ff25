#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nlsa::io {

/// Shortest decimal text that round-trips to the same double; "nan", "inf", "-inf" otherwise.
std::string format_number(double x);

/// Quotes a CSV field when it holds a comma, quote or line break.
std::string csv_escape(const std::string& field);

/// Comma-separated file with a header row and CRLF-free line endings.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

    void row(std::initializer_list<double> values);
    void row(const std::vector<double>& values);
    /// Mixed row; numbers must be formatted by the caller.
    void text_row(const std::vector<std::string>& fields);

    std::size_t columns() const { return header_.size(); }
    std::size_t rows() const { return rows_; }

private:
    std::ofstream out_;
    std::vector<std::string> header_;
    std::size_t rows_ = 0;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// SVG

struct Series {
    std::vector<double> x;
    std::vector<double> y;  ///< NaN entries break the line
    std::string color = "#1f4e9c";
    std::string dash;  ///< stroke-dasharray, empty for solid
    double width = 1.4;
    std::string label;
};

enum class Glyph { circle, cross, square, triangle };

struct Marker {
    double x = 0.0;
    double y = 0.0;
    Glyph glyph = Glyph::circle;
    std::string color = "#000000";
    bool filled = true;
    double size = 4.0;
    std::string label;
};

struct Panel {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    /// xmin, xmax, ymin, ymax; fitted to the data when empty.
    std::optional<std::array<double, 4>> limits;
    bool log_y = false;
    std::vector<Series> series;
    std::vector<Marker> markers;
};

/// Grid of panels rendered to a standalone SVG document.
class Figure {
public:
    Figure(int rows, int cols, double panel_width = 520.0, double panel_height = 340.0);

    Panel& panel(int row, int col);
    Panel& panel(int index = 0) { return panels_.at(static_cast<std::size_t>(index)); }

    std::string render() const;
    void save(const std::filesystem::path& path) const;

private:
    int rows_;
    int cols_;
    double width_;
    double height_;
    std::vector<Panel> panels_;
};

/// Marching-squares iso-line of z (z[i][j] at x[i], y[j]) at `level`, as
/// segments joined into polylines; polylines are separated by NaN in y.
Series contour(const std::vector<double>& x, const std::vector<double>& y,
               const std::vector<std::vector<double>>& z, double level);

/// Evenly spaced iso-levels strictly inside [min z, max z].
std::vector<double> contour_levels(const std::vector<std::vector<double>>& z, int count);

}  // namespace nlsa::io
