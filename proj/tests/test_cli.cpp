#include "mrfield/cli.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace mrfield;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path dir;
  TempDir() {
    dir = fs::temp_directory_path() / fs::path(cat("mrfield_cli_", splitmix64(uint64_t(
                                          std::chrono::steady_clock::now().time_since_epoch().count()))));
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string operator/(const std::string &name) const { return (dir / name).string(); }
};

void write_text(const std::string &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
}

const char *kTinySeq = "name tiny\n"
                       "n_tr 40\n"
                       "readout_ms 5.0\n"
                       "flip_deg 5 9 14 19 24 29 34 39 44 49 54 59 64 69 74 70 65 60 55 50 "
                       "45 40 35 30 25 20 15 10 6 5 8 12 18 26 34 42 50 44 30 12\n"
                       "tr_ms 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 "
                       "12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12 12\n"
                       "te_ms 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 "
                       "2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2 2\n";

const char *kTinyGrid = "grid_t1_n 6\ngrid_t1_lo 300\ngrid_t1_hi 2000\n"
                        "grid_t2_n 5\ngrid_t2_lo 30\ngrid_t2_hi 250\n"
                        "grid_b1_n 3\ngrid_b1_lo 0.8\ngrid_b1_hi 1.2\n";

} // namespace

TEST_CASE("exit codes: usage vs data errors") {
  REQUIRE(run_cli({"no-such-command"}) == 1);
  REQUIRE(run_cli({}) == 1);
  REQUIRE(run_cli({"render", "missing.qmap"}) == 2);
  REQUIRE(run_cli({"phantom"}) == 1); // missing required --out
  REQUIRE(run_cli({"--help"}) == 0);
}

TEST_CASE("phantom / dict / compress / synth / match / eval / render chain") {
  TempDir tmp;
  write_text(tmp / "tiny.seq", kTinySeq);
  write_text(tmp / "grid.cfg", kTinyGrid);

  REQUIRE(run_cli({"phantom", "--grid-n", "32", "--seed", "5", "--out", tmp / "ph"}) == 0);
  REQUIRE(fs::exists(tmp / "ph.t1.qmap"));
  REQUIRE(fs::exists(tmp / "ph.mask.qmap"));

  REQUIRE(run_cli({"dict", "--seq", tmp / "tiny.seq", "--grid", tmp / "grid.cfg", "--out",
                   tmp / "dict"}) == 0);
  REQUIRE(fs::exists(tmp / "dict.atoms.qmap"));

  REQUIRE(run_cli({"compress", "--dict", tmp / "dict", "--k", "4", "--out", tmp / "sub"}) == 0);
  REQUIRE(fs::exists(tmp / "sub.phi.qmap"));
  REQUIRE(fs::exists(tmp / "sub.coeffs.qmap"));

  REQUIRE(run_cli({"synth", "--maps", tmp / "ph", "--basis", tmp / "sub", "--segments", "4",
                   "--out", tmp / "sy"}) == 0);
  REQUIRE(fs::exists(tmp / "sy.clean.qmap"));
  REQUIRE(fs::exists(tmp / "sy.corrupt.qmap"));
  REQUIRE(fs::exists(tmp / "sy.samples.qmap"));
  REQUIRE(fs::exists(tmp / "sy.traj.qmap"));

  REQUIRE(run_cli({"mfi-correct", "--samples", tmp / "sy.samples.qmap", "--traj",
                   tmp / "sy.traj.qmap", "--b0", tmp / "ph.b0.qmap", "--out",
                   tmp / "deblur.qmap"}) == 0);
  REQUIRE(fs::exists(tmp / "deblur.qmap"));

  REQUIRE(run_cli({"match", "--coeffs", tmp / "deblur.qmap", "--basis", tmp / "sub", "--mode",
                   "b1", "--b1map", tmp / "ph.b1.qmap", "--mask", tmp / "ph.mask.qmap",
                   "--out", tmp / "m"}) == 0);
  REQUIRE(fs::exists(tmp / "m.mt2.qmap"));

  REQUIRE(run_cli({"match", "--coeffs", tmp / "sy.corrupt.qmap", "--basis", tmp / "sub",
                   "--mode", "uncorrected", "--mask", tmp / "ph.mask.qmap", "--out",
                   tmp / "mu"}) == 0);

  REQUIRE(run_cli({"eval", "--a", tmp / "m.mt2.qmap", "--b", tmp / "ph.t2.qmap", "--mask",
                   tmp / "ph.mask.qmap", "--range", "0", "300"}) == 0);

  REQUIRE(run_cli({"render", tmp / "ph.t1.qmap", "--lo", "0", "--hi", "3000"}) == 0);
  REQUIRE(fs::exists(tmp / "ph.t1.pgm"));
  {
    std::ifstream pgm(tmp / "ph.t1.pgm", std::ios::binary);
    std::string magic;
    pgm >> magic;
    REQUIRE(magic == "P5");
  }

  // matched T2 is a plausible map: nonzero inside mask
  auto t2 = to_real_image(read_qmap_file(tmp / "m.mt2.qmap"));
  auto mask = to_mask_image(read_qmap_file(tmp / "ph.mask.qmap"));
  long nonzero = 0, inside = 0;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask.data[i]) {
      ++inside;
      if (t2.data[i] > 0.0) ++nonzero;
    }
  REQUIRE(inside > 0);
  REQUIRE(nonzero == inside);
}

TEST_CASE("match rejects b1 mode without a map") {
  TempDir tmp;
  write_text(tmp / "tiny.seq", kTinySeq);
  write_text(tmp / "grid.cfg", kTinyGrid);
  REQUIRE(run_cli({"phantom", "--grid-n", "16", "--seed", "1", "--out", tmp / "p"}) == 0);
  REQUIRE(run_cli({"dict", "--seq", tmp / "tiny.seq", "--grid", tmp / "grid.cfg", "--out",
                   tmp / "d"}) == 0);
  REQUIRE(run_cli({"compress", "--dict", tmp / "d", "--k", "3", "--out", tmp / "s"}) == 0);
  REQUIRE(run_cli({"synth", "--maps", tmp / "p", "--basis", tmp / "s", "--out", tmp / "y"}) == 0);
  REQUIRE(run_cli({"match", "--coeffs", tmp / "y.clean.qmap", "--basis", tmp / "s", "--mode",
                   "b1", "--mask", tmp / "p.mask.qmap", "--out", tmp / "m"}) == 2);
  REQUIRE(run_cli({"match", "--coeffs", tmp / "y.clean.qmap", "--basis", tmp / "s", "--mode",
                   "bogus", "--mask", tmp / "p.mask.qmap", "--out", tmp / "m"}) == 2);
}

TEST_CASE("qmap artifacts roundtrip through the io helpers") {
  TempDir tmp;
  // network save/load
  NetworkConfig cfg;
  cfg.in_channels = 4;
  cfg.levels = 1;
  cfg.base_filters = 2;
  auto net = init_network(cfg, 11);
  save_network(tmp / "n.net.qmap", net);
  auto back = load_network(tmp / "n.net.qmap");
  auto ra = net.tensor_refs(), rb = back.tensor_refs();
  for (size_t i = 0; i < ra.size(); ++i) {
    REQUIRE(ra[i].name == rb[i].name);
    for (size_t j = 0; j < ra[i].data->size(); ++j)
      REQUIRE((*rb[i].data)[j] == double(float((*ra[i].data)[j])));
  }

  // trajectory save/load
  auto traj = design_spiral(5.0, 64.0, 32, 4.0);
  save_trajectory(tmp / "t.qmap", traj);
  auto traj2 = load_trajectory(tmp / "t.qmap");
  REQUIRE(traj2.matrix_n == 32);
  REQUIRE(traj2.n_samples() == traj.n_samples());
  REQUIRE(traj2.readout_ms == traj.readout_ms);

  // samples save/load
  Rng rng(4);
  std::vector<SampleVector> samples(2, SampleVector(traj.n_samples()));
  for (auto &ch : samples)
    for (auto &v : ch) v = cxd(rng.normal(), rng.normal());
  save_samples(tmp / "s.qmap", samples);
  auto samples2 = load_samples(tmp / "s.qmap");
  REQUIRE(samples2.size() == 2);
  REQUIRE(samples2[0].size() == traj.n_samples());
}

TEST_CASE("pipeline smoke run is reproducible across runs and thread counts") {
  TempDir tmp;
  write_text(tmp / "tiny.seq", kTinySeq);
  const std::string config = cat("seq tiny.seq\n", kTinyGrid,
                                 "k_rank 3\n"
                                 "grid_n 32\n"
                                 "voxel_mm 2.0\n"
                                 "segments 4\n"
                                 "n_train 4\n"
                                 "n_holdout 1\n"
                                 "epochs 2\n"
                                 "batch 2\n"
                                 "levels 2\n"
                                 "filters 4\n"
                                 "seed 11\n");
  write_text(tmp / "smoke.cfg", config);

  REQUIRE(run_cli({"pipeline", "--config", tmp / "smoke.cfg", "--out", tmp / "runA"}) == 0);
  REQUIRE(run_cli({"--threads", "1", "pipeline", "--config", tmp / "smoke.cfg", "--out",
                   tmp / "runB"}) == 0);
  set_thread_count(int(std::thread::hardware_concurrency()));

  std::ifstream a(tmp / "runA/hashes.txt"), b(tmp / "runB/hashes.txt");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  REQUIRE(sa.str() == sb.str());
  REQUIRE(sa.str().find("TOTAL") != std::string::npos);
  REQUIRE(fs::exists(tmp / "runA/metrics.txt"));
  REQUIRE(fs::exists(tmp / "runA/net.qmap"));
}
