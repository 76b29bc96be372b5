#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "insulopt/field.hpp"
#include "insulopt/vec2.hpp"

namespace insulopt {

// Deterministic number formatting used for every text artifact ("%.12g").
std::string format_num(double v);

// GRD1 grid file: header line "GRD1 nx ny h ox oy", then nx*ny whitespace-
// separated values, row-major bottom-to-top (one row per line).
struct Grd1 {
  Field field;
  double h = 0.0;
  Vec2 origin;
};

void write_grd1(const std::filesystem::path& path, const Field& f, double h,
                Vec2 origin);
Grd1 read_grd1(const std::filesystem::path& path);

// Minimal CSV writer: a header row then data rows, numbers via format_num.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);
  ~CsvWriter();
  void row(const std::vector<std::string>& cells);
  void row_num(const std::vector<double>& cells);

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace insulopt
