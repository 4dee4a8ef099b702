#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "butter/config.hpp"
#include "butter/io.hpp"
#include "butter/rng.hpp"

using butter::ConfigError;
using butter::GroundTruth;
using butter::GtRecord;
using butter::IoError;
using butter::load_config;
using butter::read_btf;
using butter::RunConfig;
using butter::SplitMix64;
using butter::Tensor;
using butter::write_btf;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("butter_io_" + name)).string();
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spew(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
}

}  // namespace

TEST_CASE("tensor file bytes are frozen") {
  const auto path = tmp_path("frozen.btf");
  write_btf(path, Tensor<double>({1, 2}, {1.0, -2.5}));
  const auto bytes = slurp(path);
  const unsigned char want[] = {
      'B',  'T',  'F',  '1',         // magic
      0x02, 0x00, 0x00, 0x00,        // rank
      0x01, 0x00, 0x00, 0x00,        // extent 0
      0x02, 0x00, 0x00, 0x00,        // extent 1
      0x00, 0x00, 0x80, 0x3f,        // 1.0f
      0x00, 0x00, 0x20, 0xc0,        // -2.5f
  };
  REQUIRE(bytes.size() == sizeof(want));
  for (std::size_t i = 0; i < sizeof(want); ++i) REQUIRE(bytes[i] == want[i]);
  std::remove(path.c_str());
}

TEST_CASE("tensor files roundtrip") {
  const auto path = tmp_path("round.btf");
  SECTION("float-representable values survive exactly") {
    Tensor<double> t({2, 3}, {1.5, -0.25, 3.0, 0.0, -1024.0, 0.0625});
    write_btf(path, t);
    auto back = read_btf<double>(path);
    REQUIRE(back.dims() == t.dims());
    for (std::int64_t i = 0; i < t.size(); ++i) REQUIRE(back[i] == t[i]);
  }
  SECTION("arbitrary doubles come back at single precision") {
    SplitMix64 rng(41);
    auto t = butter::random_tensor<double>({3, 4, 5}, rng, -10, 10);
    write_btf(path, t);
    auto back = read_btf<double>(path);
    for (std::int64_t i = 0; i < t.size(); ++i)
      REQUIRE(back[i] == Catch::Approx(t[i]).epsilon(1e-6));
  }
  std::remove(path.c_str());
}

TEST_CASE("tensor files reject malformed input") {
  const auto path = tmp_path("bad.btf");
  SECTION("missing file") { REQUIRE_THROWS_AS(read_btf<double>(tmp_path("nope.btf")), IoError); }
  SECTION("bad magic") {
    spew(path, "XTF1aaaaaaaaaaaa");
    REQUIRE_THROWS_AS(read_btf<double>(path), IoError);
  }
  SECTION("truncated header") {
    spew(path, std::string("BTF1") + std::string(2, '\0'));
    REQUIRE_THROWS_AS(read_btf<double>(path), IoError);
  }
  SECTION("unsupported rank") {
    std::string s = "BTF1";
    s += '\x09';
    s += std::string(3, '\0');
    spew(path, s);
    REQUIRE_THROWS_AS(read_btf<double>(path), IoError);
  }
  SECTION("zero extent") {
    std::string s = "BTF1";
    s += '\x01';
    s += std::string(3, '\0');
    s += std::string(4, '\0');  // extent 0
    spew(path, s);
    REQUIRE_THROWS_AS(read_btf<double>(path), IoError);
  }
  SECTION("truncated payload") {
    write_btf(path, Tensor<double>({2, 2}, {1, 2, 3, 4}));
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 3);
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    os.close();
    REQUIRE_THROWS_AS(read_btf<double>(path), IoError);
  }
  SECTION("trailing bytes") {
    write_btf(path, Tensor<double>({2}, {1, 2}));
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << 'x';
    os.close();
    REQUIRE_THROWS_AS(read_btf<double>(path), IoError);
  }
  std::remove(path.c_str());
}

TEST_CASE("image files carry the plain binary header") {
  const auto path = tmp_path("img.pgm");
  butter::write_pgm(path, 2, 3, {0, 50, 100, 150, 200, 255});
  const auto bytes = slurp(path);
  const std::string head = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == head.size() + 6);
  for (std::size_t i = 0; i < head.size(); ++i)
    REQUIRE(bytes[i] == static_cast<unsigned char>(head[i]));
  REQUIRE(bytes[head.size()] == 0);
  REQUIRE(bytes.back() == 255);
  REQUIRE_THROWS_AS(butter::write_pgm(path, 2, 3, {1, 2, 3}), IoError);
  std::remove(path.c_str());
}

TEST_CASE("named tensor directories roundtrip") {
  const auto dir = tmp_path("params_dir");
  std::filesystem::remove_all(dir);
  Tensor<double> a({2, 2}, {1.5, 2.5, 3.5, 4.5});
  Tensor<double> b({3}, {-1.0, 0.0, 1.0});
  butter::save_named_tensors<double>(dir, {{"alpha", &a}, {"beta", &b}});
  auto loaded = butter::load_named_tensors<double>(dir);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded.count("alpha") == 1);
  REQUIRE(loaded.count("beta") == 1);
  REQUIRE(loaded.at("alpha").dims() == a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) REQUIRE(loaded.at("alpha")[i] == a[i]);
  for (std::int64_t i = 0; i < b.size(); ++i) REQUIRE(loaded.at("beta")[i] == b[i]);

  SECTION("manifest dims must agree with the tensor file") {
    write_btf(dir + "/alpha.btf", Tensor<double>({4}, {1, 2, 3, 4}));
    REQUIRE_THROWS_AS(butter::load_named_tensors<double>(dir), IoError);
  }
  SECTION("missing manifest") {
    std::filesystem::remove(dir + "/manifest.txt");
    REQUIRE_THROWS_AS(butter::load_named_tensors<double>(dir), IoError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("save creates nested directories") {
  const auto dir = tmp_path("nested/a/b");
  std::filesystem::remove_all(tmp_path("nested"));
  Tensor<double> t({1}, {7.0});
  REQUIRE_NOTHROW(butter::save_named_tensors<double>(dir, {{"t", &t}}));
  REQUIRE(std::filesystem::exists(dir + "/t.btf"));
  std::filesystem::remove_all(tmp_path("nested"));
}

TEST_CASE("ground truth files roundtrip") {
  const auto path = tmp_path("gt.txt");
  GroundTruth<double> gt;
  gt.grid_s = 2;
  gt.boxes_b = 2;
  gt.num_classes = 3;
  gt.records.push_back({0, 1, 0.25, 0.5, 0.125, 0.75, 2});
  gt.records.push_back({3, 0, 0.0, 1.0, 1.0, 0.0625, 0});
  butter::write_ground_truth(path, gt);
  auto back = butter::read_ground_truth<double>(path);
  REQUIRE(back.grid_s == 2);
  REQUIRE(back.boxes_b == 2);
  REQUIRE(back.num_classes == 3);
  REQUIRE(back.records.size() == 2);
  REQUIRE(back.records[0].cell == 0);
  REQUIRE(back.records[0].slot == 1);
  REQUIRE(back.records[0].x == 0.25);
  REQUIRE(back.records[0].h == 0.75);
  REQUIRE(back.records[0].cls == 2);
  REQUIRE(back.records[1].w == 1.0);
  std::remove(path.c_str());
}

TEST_CASE("ground truth files reject bad shapes") {
  const auto path = tmp_path("gt_bad.txt");
  SECTION("empty file") {
    spew(path, "");
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
  }
  SECTION("header missing a key") {
    spew(path, "S=2 B=0\n");
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
  }
  SECTION("unknown header key") {
    spew(path, "S=2 B=0 K=1 Q=5\n");
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
  }
  SECTION("short record line") {
    spew(path, "S=2 B=1 K=1\n0 0 0.5 0.5\n");
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
  }
  SECTION("declared count must match records") {
    spew(path, "S=2 B=2 K=1\n0 0 0.5 0.5 0.5 0.5 0\n");
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
  }
  SECTION("out of range fields fail validation") {
    spew(path, "S=2 B=1 K=1\n9 0 0.5 0.5 0.5 0.5 0\n");  // cell 9 in a 2x2 grid
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
    spew(path, "S=2 B=1 K=1\n0 0 1.5 0.5 0.5 0.5 0\n");  // center above 1
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
    spew(path, "S=2 B=1 K=1\n0 0 0.5 0.5 0 0.5 0\n");  // zero width
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
    spew(path, "S=2 B=1 K=1\n0 0 0.5 0.5 0.5 0.5 1\n");  // class id = K
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
    spew(path, "S=2 B=1 K=1\n0 7 0.5 0.5 0.5 0.5 0\n");  // slot beyond the heads
    REQUIRE_THROWS_AS(butter::read_ground_truth<double>(path), IoError);
  }
  std::remove(path.c_str());
}

TEST_CASE("direct validation throws on count mismatch") {
  GroundTruth<double> gt;
  gt.grid_s = 2;
  gt.boxes_b = 1;  // but no records
  gt.num_classes = 1;
  REQUIRE_THROWS_AS(butter::validate_ground_truth(gt), std::invalid_argument);
}

TEST_CASE("config files parse with comments and spacing") {
  const auto path = tmp_path("run.cfg");
  spew(path,
       "# run setup\n"
       "seed = 99\n"
       "f=5   # stencil\n"
       "\n"
       "lambda_iou = 2.25\n"
       "precision=single\n");
  auto cfg = load_config(path);
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.f == 5);
  REQUIRE(cfg.fhat == 3);  // untouched default
  REQUIRE(cfg.lambda_iou == 2.25);
  REQUIRE(cfg.precision == "single");
  REQUIRE_NOTHROW(cfg.validate());
  std::remove(path.c_str());
}

TEST_CASE("config files reject malformed input") {
  const auto path = tmp_path("bad.cfg");
  SECTION("missing file") { REQUIRE_THROWS_AS(load_config(tmp_path("nope.cfg")), ConfigError); }
  SECTION("no equals sign") {
    spew(path, "seed 9\n");
    REQUIRE_THROWS_AS(load_config(path), ConfigError);
  }
  SECTION("unknown key") {
    spew(path, "velocity=3\n");
    REQUIRE_THROWS_AS(load_config(path), ConfigError);
  }
  SECTION("unparsable value") {
    spew(path, "seed=banana\n");
    REQUIRE_THROWS_AS(load_config(path), ConfigError);
  }
  std::remove(path.c_str());
}

TEST_CASE("config validation rejects bad combinations") {
  RunConfig cfg;
  REQUIRE_NOTHROW(cfg.validate());
  cfg.f = 2;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.f = 3;
  cfg.alpha = 1.5;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.alpha = 0.25;
  cfg.precision = "half";
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.precision = "double";
  cfg.lambda_cls = -1;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}
