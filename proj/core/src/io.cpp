#include "insulopt/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace insulopt {

std::string format_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_grd1(const std::filesystem::path& path, const Field& f, double h,
                Vec2 origin) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "GRD1 " << f.nx << ' ' << f.ny << ' ' << format_num(h) << ' '
      << format_num(origin.x) << ' ' << format_num(origin.y) << '\n';
  for (int j = 0; j < f.ny; ++j) {
    for (int i = 0; i < f.nx; ++i) {
      if (i) out << ' ';
      out << format_num(f.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Grd1 read_grd1(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "GRD1")
    throw std::runtime_error(path.string() + ": not a GRD1 file");
  Grd1 g;
  int nx, ny;
  in >> nx >> ny >> g.h >> g.origin.x >> g.origin.y;
  if (!in || nx <= 0 || ny <= 0 || g.h <= 0)
    throw std::runtime_error(path.string() + ": malformed GRD1 header");
  g.field = Field(nx, ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (!(in >> g.field.at(i, j)))
        throw std::runtime_error(path.string() + ": truncated GRD1 data");
  return g;
}

struct CsvWriter::Impl {
  std::ofstream out;
  std::filesystem::path path;
};

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : impl_(new Impl{std::ofstream(path), path}) {
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("cannot write " + path.string());
  }
  row(header);
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (size_t k = 0; k < cells.size(); ++k) {
    if (k) impl_->out << ',';
    impl_->out << cells[k];
  }
  impl_->out << '\n';
}

void CsvWriter::row_num(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double v : cells) s.push_back(format_num(v));
  row(s);
}

}  // namespace insulopt
