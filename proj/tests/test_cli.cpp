#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef MVA_CLI_PATH
#define MVA_CLI_PATH "mva"
#endif

namespace {

struct RunOutput {
  int exit_code = -1;
  std::string stdout_text;
};

RunOutput run_cli(const std::string& args) {
  const std::string cmd = std::string(MVA_CLI_PATH) + " " + args + " 2>/dev/null";
  RunOutput out;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 512> buf;
  while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out.stdout_text += buf.data();
  const int status = pclose(pipe);
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string temp_file(const char* name, const std::string& content) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path, std::ios::trunc);
  out << content;
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("storage prints the shared and full-model units") {
  RunOutput shared = run_cli("storage --tasks 5 --ratio 0.025");
  CHECK(shared.exit_code == 0);
  CHECK(shared.stdout_text == "1.125\n");
  RunOutput full = run_cli("storage --tasks 5 --full");
  CHECK(full.exit_code == 0);
  CHECK(full.stdout_text == "5.000\n");
}

TEST_CASE("missing files exit with code 2") {
  RunOutput r = run_cli("train --config /nonexistent.cfg --data /nonexistent.mvad --out /tmp/x.mvck");
  CHECK(r.exit_code == 2);
  RunOutput e = run_cli("eval --ckpt /nonexistent.mvck --data /nonexistent.mvad");
  CHECK(e.exit_code == 2);
}

TEST_CASE("config errors exit with code 3") {
  const std::string bad = temp_file("mva_cli_bad.cfg", "encoder.dv = 48\n");
  RunOutput r = run_cli("params --config " + bad);
  CHECK(r.exit_code == 3);
  std::filesystem::remove(bad);
}

TEST_CASE("params reports the preset table") {
  RunOutput r = run_cli("params --clip-b16");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("ratio_percent") != std::string::npos);
  CHECK(r.stdout_text.find("tunable") != std::string::npos);
}

TEST_CASE("gen-data, train, eval pipeline produces identical stdout across runs") {
  const std::string cfg = temp_file("mva_cli_pipeline.cfg",
                                    "data.n_pairs = 16\n"
                                    "train.batch = 4\n"
                                    "train.epochs = 1\n");
  const std::string data = (std::filesystem::temp_directory_path() / "mva_cli_pipeline.mvad").string();
  const std::string ckpt = (std::filesystem::temp_directory_path() / "mva_cli_pipeline.mvck").string();

  RunOutput gen = run_cli("gen-data --spec " + cfg + " --out " + data);
  CHECK(gen.exit_code == 0);
  CHECK(gen.stdout_text.find("16 samples") != std::string::npos);

  RunOutput train1 = run_cli("train --config " + cfg + " --data " + data + " --out " + ckpt);
  CHECK(train1.exit_code == 0);
  RunOutput eval1 = run_cli("eval --ckpt " + ckpt + " --data " + data);
  CHECK(eval1.exit_code == 0);
  RunOutput eval2 = run_cli("eval --ckpt " + ckpt + " --data " + data);
  CHECK(eval1.stdout_text == eval2.stdout_text);
  CHECK(eval1.stdout_text.find("T2V ") != std::string::npos);
  CHECK(eval1.stdout_text.find("V2T ") != std::string::npos);

  std::filesystem::remove(cfg);
  std::filesystem::remove(data);
  std::filesystem::remove(ckpt);
  std::filesystem::remove(ckpt + ".log");
}

TEST_CASE("gradcheck prints a parseable error line") {
  const std::string cfg = temp_file("mva_cli_gc.cfg",
                                    "encoder.d_v = 16\nencoder.d_t = 16\nencoder.embed_dim = 8\n"
                                    "encoder.patches = 4\nencoder.patch_dim = 6\nencoder.layers = 1\n"
                                    "encoder.max_frames = 2\ndata.frames = 2\ndata.patches = 4\n"
                                    "data.patch_dim = 6\nadapter.bottleneck = 4\nadapter.shrinkage = 2\n"
                                    "cmi.rows = 2\ncmi.cols = 2\n");
  RunOutput r = run_cli("gradcheck --config " + cfg + " --eps 1e-5");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.rfind("max_rel_err ", 0) == 0);
  const double err = std::stod(r.stdout_text.substr(12));
  CHECK(err < 1e-4);
  std::filesystem::remove(cfg);
}

}  // TEST_SUITE
