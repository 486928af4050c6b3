#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dmtl {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  // Fixed y range; by default [0,1] when every value fits, else the data range.
  std::optional<std::pair<double, double>> y_range;
};

/// Standalone SVG, 800×500 viewBox, one polyline per series.
std::string render_svg(const LineChart& chart);

/// Column-oriented CSV contents (header names and numeric cells).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);

/// Plots `columns` against the first column. Throws ArgumentError naming an
/// unknown column, or "no data rows" when the body is empty.
LineChart chart_from_table(const CsvTable& table, const std::vector<std::string>& columns);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dmtl
