#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "insulopt/io.hpp"

using namespace insulopt;

TEST_CASE("grd1 round trip") {
  Field f(5, 4);
  for (int k = 0; k < f.size(); ++k) f[k] = 0.1 * k - 1.0;
  auto path = std::filesystem::temp_directory_path() / "insulopt_io_test.grd1";
  write_grd1(path, f, 0.25, {-2, -2});
  auto g = read_grd1(path);
  CHECK(g.field.nx == 5);
  CHECK(g.field.ny == 4);
  CHECK(g.h == doctest::Approx(0.25));
  CHECK(g.origin.x == doctest::Approx(-2));
  for (int k = 0; k < f.size(); ++k)
    CHECK(g.field[k] == doctest::Approx(f[k]).epsilon(1e-11));
  std::filesystem::remove(path);
}

TEST_CASE("grd1 rejects malformed input") {
  auto path = std::filesystem::temp_directory_path() / "insulopt_io_bad.grd1";
  {
    std::ofstream out(path);
    out << "GRD2 4 4 0.1 0 0\n";
  }
  CHECK_THROWS(read_grd1(path));
  {
    std::ofstream out(path);
    out << "GRD1 4 4 0.1 0 0\n1 2 3\n";  // truncated
  }
  CHECK_THROWS(read_grd1(path));
  std::filesystem::remove(path);
}

TEST_CASE("csv writer emits deterministic text") {
  auto path = std::filesystem::temp_directory_path() / "insulopt_io_test.csv";
  {
    CsvWriter csv(path, {"a", "b"});
    csv.row_num({1.5, 2.0 / 3.0});
  }
  std::ifstream in(path);
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(l1 == "a,b");
  CHECK(l2 == "1.5,0.666666666667");
  std::filesystem::remove(path);
}

TEST_CASE("format_num is stable") {
  CHECK(format_num(9.0647202836543) == "9.06472028365");
  CHECK(format_num(0.0) == "0");
}
