#include "doctest.h"

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flowood/checkpoint.hpp"
#include "flowood/errors.hpp"
#include "test_util.hpp"

using namespace flowood;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("flowood_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const char* name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("checkpoint: flow round trip reproduces log_prob to 0 ulp") {
  Rng rng(81);
  FlowModel model = testutil::random_flow_model(6, 5, 2, 12, rng, 0.7);
  TempDir tmp;
  save_checkpoint(model, tmp.file("model.ckpt"));
  const FlowModel loaded = load_checkpoint(tmp.file("model.ckpt"));

  std::vector<double> a(6);
  for (int rep = 0; rep < 100; ++rep) {
    for (double& v : a) v = rng.normal() * 2.0;
    const auto r1 = flow_log_prob(model, a);
    const auto r2 = flow_log_prob(loaded, a);
    CHECK(r1.total == r2.total);
    CHECK(r1.base_term == r2.base_term);
    CHECK(r1.logdet_term == r2.logdet_term);
    CHECK(r1.latent == r2.latent);
  }
}

TEST_CASE("checkpoint: resampling base metadata survives bit-exactly") {
  Rng rng(82);
  ResamplingBase base;
  base.dim = 4;
  base.trunc = 37;
  base.z_ema = 0.3125;
  base.ema_decay = 0.875;
  {
    Rng arng(83);
    base.accept_net = testutil::random_dense_net({4, 8, 1}, Activation::tanh,
                                                 Activation::sigmoid, arng, 0.9);
  }
  FlowModel model = testutil::random_flow_model(4, 3, 2, 8, rng, 0.5, std::move(base));
  TempDir tmp;
  save_checkpoint(model, tmp.file("resampling.ckpt"));
  const FlowModel loaded = load_checkpoint(tmp.file("resampling.ckpt"));
  const auto& rb = std::get<ResamplingBase>(loaded.base);
  CHECK(rb.trunc == 37);
  CHECK(rb.z_ema == 0.3125);
  CHECK(rb.ema_decay == 0.875);
  const auto& orig = std::get<ResamplingBase>(model.base);
  CHECK(rb.accept_net.layers[0].weights == orig.accept_net.layers[0].weights);
}

TEST_CASE("checkpoint: gaussian-base model reloads as gaussian") {
  Rng rng(84);
  FlowModel model = testutil::random_flow_model(3, 2, 2, 6, rng, 0.5);
  TempDir tmp;
  save_checkpoint(model, tmp.file("gauss.ckpt"));
  const FlowModel loaded = load_checkpoint(tmp.file("gauss.ckpt"));
  CHECK(std::holds_alternative<GaussianBase>(loaded.base));
}

TEST_CASE("checkpoint: corrupted byte fails the checksum") {
  Rng rng(85);
  FlowModel model = testutil::random_flow_model(3, 2, 2, 6, rng, 0.5);
  TempDir tmp;
  const std::string path = tmp.file("corrupt.ckpt");
  save_checkpoint(model, path);

  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  bytes[bytes.size() / 2] ^= 0x40;  // flip a weight bit
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    (void)load_checkpoint(path);
    FAIL("expected a checksum error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::data);
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }
}

TEST_CASE("checkpoint: truncated file and wrong kind are rejected") {
  Rng rng(86);
  FlowModel model = testutil::random_flow_model(3, 2, 2, 6, rng, 0.5);
  TempDir tmp;
  const std::string path = tmp.file("trunc.ckpt");
  save_checkpoint(model, path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS((void)load_checkpoint(path), Error);

  // a flow checkpoint is not an ocsvm checkpoint
  const std::string flow_path = tmp.file("flow.ckpt");
  save_checkpoint(model, flow_path);
  CHECK_THROWS_AS((void)load_ocsvm_checkpoint(flow_path), Error);
}

TEST_CASE("checkpoint: ocsvm round trip") {
  OcSvmModel model;
  model.dim = 2;
  model.support_vectors = {0.5, -1.5, 2.0, 0.25, -0.75, 1.0};
  model.alphas = {0.25, 0.5, 0.25};
  model.rho = 0.125;
  model.gamma = 0.4;
  model.nu = 0.5;
  TempDir tmp;
  save_ocsvm_checkpoint(model, tmp.file("ocsvm.ckpt"));
  const OcSvmModel loaded = load_ocsvm_checkpoint(tmp.file("ocsvm.ckpt"));
  CHECK(loaded.support_vectors == model.support_vectors);
  CHECK(loaded.alphas == model.alphas);
  CHECK(loaded.rho == model.rho);
  CHECK(loaded.gamma == model.gamma);
  CHECK(loaded.nu == model.nu);
  const std::vector<double> x = {0.1, 0.9};
  CHECK(ocsvm_score(loaded, x) == ocsvm_score(model, x));
}

TEST_CASE("checkpoint: identifiers are stable") {
  Rng rng(87);
  FlowModel model = testutil::random_flow_model(3, 2, 2, 6, rng, 0.5);
  TempDir tmp;
  save_checkpoint(model, tmp.file("a.ckpt"));
  save_checkpoint(model, tmp.file("b.ckpt"));
  CHECK(checkpoint_id(tmp.file("a.ckpt")) == checkpoint_id(tmp.file("b.ckpt")));
}
