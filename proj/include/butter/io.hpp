#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "butter/detect.hpp"
#include "butter/tensor.hpp"

namespace butter {

// raised for any malformed or unreadable input file
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace detail

// BTF: "BTF1" magic, u32 rank, u32 extents, then float32 payload in row-major
// order, everything little-endian.
template <typename T>
void write_btf(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("btf: cannot open for writing: " + path);
  os.write("BTF1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) detail::put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  for (std::int64_t i = 0; i < t.size(); ++i)
    detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(t[i])));
  if (!os) throw IoError("btf: write failed: " + path);
}

template <typename T>
Tensor<T> read_btf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("btf: cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "BTF1") throw IoError("btf: bad magic: " + path);
  std::uint32_t rank = 0;
  if (!detail::get_u32(is, rank)) throw IoError("btf: truncated header: " + path);
  if (rank < 1 || rank > 8) throw IoError("btf: unsupported rank " + std::to_string(rank) + ": " + path);
  std::vector<int> dims(rank);
  std::int64_t volume = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    if (!detail::get_u32(is, d)) throw IoError("btf: truncated header: " + path);
    if (d < 1 || d > (1u << 24)) throw IoError("btf: bad extent " + std::to_string(d) + ": " + path);
    dims[i] = static_cast<int>(d);
    volume *= d;
    if (volume > (std::int64_t(1) << 31)) throw IoError("btf: volume too large: " + path);
  }
  Tensor<T> t(dims);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    if (!detail::get_u32(is, bits)) throw IoError("btf: truncated payload: " + path);
    t[i] = static_cast<T>(std::bit_cast<float>(bits));
  }
  char extra;
  if (is.read(&extra, 1)) throw IoError("btf: trailing bytes: " + path);
  return t;
}

// binary 8-bit PGM
inline void write_pgm(const std::string& path, int h, int w, const std::vector<unsigned char>& pixels) {
  if (static_cast<std::int64_t>(pixels.size()) != static_cast<std::int64_t>(h) * w)
    throw IoError("pgm: pixel count does not match " + std::to_string(h) + "x" + std::to_string(w));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("pgm: cannot open for writing: " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!os) throw IoError("pgm: write failed: " + path);
}

// ---- named tensor directories ----

// manifest.txt holds "<name> <rank> <extents...>" per line; each tensor lives
// in <name>.btf alongside it
template <typename T>
void save_named_tensors(const std::string& dir, const std::vector<std::pair<std::string, Tensor<T>*>>& entries) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("params: cannot create directory " + dir + ": " + ec.message());
  std::ofstream man(dir + "/manifest.txt");
  if (!man) throw IoError("params: cannot open manifest for writing in " + dir);
  for (const auto& [name, tensor] : entries) {
    man << name << " " << tensor->ndim();
    for (int i = 0; i < tensor->ndim(); ++i) man << " " << tensor->dim(i);
    man << "\n";
    write_btf(dir + "/" + name + ".btf", *tensor);
  }
  if (!man) throw IoError("params: manifest write failed in " + dir);
}

template <typename T>
std::map<std::string, Tensor<T>> load_named_tensors(const std::string& dir) {
  std::ifstream man(dir + "/manifest.txt");
  if (!man) throw IoError("params: cannot open manifest in " + dir);
  std::map<std::string, Tensor<T>> out;
  std::string line;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    int rank = 0;
    if (!(ls >> name >> rank) || rank < 1 || rank > 8) throw IoError("params: bad manifest line: " + line);
    std::vector<int> dims(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i)
      if (!(ls >> dims[static_cast<std::size_t>(i)])) throw IoError("params: bad manifest line: " + line);
    Tensor<T> t = read_btf<T>(dir + "/" + name + ".btf");
    if (t.dims() != dims) throw IoError("params: manifest dims disagree with " + name + ".btf");
    out.emplace(name, std::move(t));
  }
  return out;
}

// ---- ground truth files ----

// header "S=<grid> B=<boxes> K=<classes>", then one record per line:
// cell slot x y w h class
template <typename T>
GroundTruth<T> read_ground_truth(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("ground truth: cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError("ground truth: empty file: " + path);
  GroundTruth<T> gt;
  {
    std::istringstream hs(line);
    std::string tok;
    int seen = 0;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq + 1 >= tok.size()) throw IoError("ground truth: bad header token: " + tok);
      const std::string key = tok.substr(0, eq);
      int value = 0;
      try {
        value = std::stoi(tok.substr(eq + 1));
      } catch (const std::exception&) {
        throw IoError("ground truth: bad header token: " + tok);
      }
      if (key == "S")
        gt.grid_s = value;
      else if (key == "B")
        gt.boxes_b = value;
      else if (key == "K")
        gt.num_classes = value;
      else
        throw IoError("ground truth: unknown header key: " + key);
      ++seen;
    }
    if (seen != 3) throw IoError("ground truth: header must declare S, B and K");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    GtRecord<T> r;
    double x, y, w, h;
    if (!(ls >> r.cell >> r.slot >> x >> y >> w >> h >> r.cls))
      throw IoError("ground truth: bad record line: " + line);
    r.x = static_cast<T>(x);
    r.y = static_cast<T>(y);
    r.w = static_cast<T>(w);
    r.h = static_cast<T>(h);
    gt.records.push_back(r);
  }
  try {
    validate_ground_truth(gt);
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("ground truth: ") + e.what() + ": " + path);
  }
  return gt;
}

template <typename T>
void write_ground_truth(const std::string& path, const GroundTruth<T>& gt) {
  std::ofstream os(path);
  if (!os) throw IoError("ground truth: cannot open for writing: " + path);
  os << "S=" << gt.grid_s << " B=" << gt.boxes_b << " K=" << gt.num_classes << "\n";
  for (const auto& r : gt.records)
    os << r.cell << " " << r.slot << " " << r.x << " " << r.y << " " << r.w << " " << r.h << " " << r.cls << "\n";
  if (!os) throw IoError("ground truth: write failed: " + path);
}

}  // namespace butter
