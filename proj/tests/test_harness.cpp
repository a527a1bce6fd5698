#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mallows/experiment.hpp"
#include "mallows/io.hpp"
#include "mallows/oracle_service.hpp"

namespace mallows {
namespace {

namespace fs = std::filesystem;

struct CommandResult {
  int status = -1;
  std::string out;
};

CommandResult run_lab(const std::string& args) {
  const std::string cmd = std::string(MALLOWS_LAB_BINARY) + " " + args + " 2>/dev/null";
  CommandResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

class TempDir {
 public:
  TempDir() {
    char tmpl[] = "/tmp/mallows_lab_test_XXXXXX";
    path_ = mkdtemp(tmpl);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name, const std::string& content = "") const {
    const auto p = (fs::path(path_) / name).string();
    if (!content.empty()) std::ofstream(p) << content;
    return p;
  }

 private:
  std::string path_;
};

const char* kMixtureJson = R"({"n": 4, "components": [{"phi": 0.3, "center": [1,2,3,4]},
  {"phi": 0.6, "center": [4,2,3,1]}], "weights": [0.4, 0.6]})";

TEST(MixtureConfig, RoundTrip) {
  const auto m = mixture_from_json(json::parse(kMixtureJson));
  EXPECT_EQ(m.n(), 4);
  EXPECT_EQ(m.k(), 2);
  EXPECT_EQ(m.components[1].center, (Permutation{4, 2, 3, 1}));
  const auto back = mixture_from_json(mixture_to_json(m));
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.components[0].phi, 0.3);
}

TEST(MixtureConfig, ErrorsNameTheField) {
  auto field_of = [](const std::string& text) {
    try {
      mixture_from_json(json::parse(text));
    } catch (const config_error& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of(R"({"components": [], "weights": []})"), "n");
  EXPECT_EQ(field_of(R"({"n": 3, "components": [{"phi": 1.5, "center": [1,2,3]}], "weights": [1]})"),
            "components[0].phi");
  EXPECT_EQ(field_of(R"({"n": 3, "components": [{"phi": 0.5, "center": [1,2]}], "weights": [1]})"),
            "components[0].center");
  EXPECT_EQ(field_of(R"({"n": 3, "components": [{"phi": 0.5, "center": [1,1,2]}], "weights": [1]})"),
            "components[0].center");
  EXPECT_EQ(field_of(R"({"n": 3, "components": [{"phi": 0.5, "center": [1,2,3]}], "weights": [0.5]})"),
            "weights");
  EXPECT_EQ(field_of(R"({"n": 3, "components": [{"center": [1,2,3]}], "weights": [1]})"),
            "components[0].phi");
  EXPECT_EQ(field_of(R"({"n": 3, "components": [{"phi": 0.5, "center": [1,2,3]}], "weights": [-1]})"),
            "weights[0]");
}

TEST(PermutationLines, ReadSkipsCommentsAndChecksLength) {
  std::istringstream ok("3 1 4 2\n# comment\n\n1 2 3 4  # component=1\n");
  const auto ps = read_permutations(ok);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0], (Permutation{3, 1, 4, 2}));
  std::istringstream mixed("1 2 3\n1 2\n");
  EXPECT_THROW(read_permutations(mixed), std::invalid_argument);
  std::istringstream bad("1 2 x\n");
  EXPECT_THROW(read_permutations(bad), std::invalid_argument);
}

TEST(PermutationLines, WriteThenRead) {
  const std::vector<Permutation> ps{Permutation{2, 1, 3}, Permutation{3, 2, 1}};
  const std::vector<int> comp{0, 1};
  std::stringstream s;
  write_permutations(s, ps, &comp);
  EXPECT_EQ(s.str(), "2 1 3  # component=0\n3 2 1  # component=1\n");
  EXPECT_EQ(read_permutations(s), ps);
}

TEST(Record, ChecksDecideStatus) {
  ExperimentRecord rec("demo", {{"a", 1}}, 7);
  EXPECT_TRUE(rec.expect("x", "tag", 0.5, "<=", 1.0));
  EXPECT_TRUE(rec.passed());
  EXPECT_FALSE(rec.expect("y", "tag", 2.0, "<=", 1.0));
  EXPECT_FALSE(rec.passed());
  const auto j = rec.to_json();
  EXPECT_EQ(j["status"], "fail");
  EXPECT_EQ(j["checks"][1]["measured"], 2.0);
  EXPECT_EQ(j["checks"][1]["bound"], 1.0);
  EXPECT_EQ(j["checks"][1]["check"], "tag");
  EXPECT_EQ(j["seed"], 7);
  EXPECT_THROW(rec.expect("z", "tag", 1.0, "<", 2.0), std::invalid_argument);
}

TEST(Record, DeterministicViewDropsOnlyRuntime) {
  ExperimentRecord a("demo", {{"a", 1}}, 1), b("demo", {{"a", 1}}, 1);
  a.set_workers(1);
  b.set_workers(4);
  a.results()["v"] = 0.125;
  b.results()["v"] = 0.125;
  const auto ja = a.to_json(), jb = b.to_json();
  EXPECT_NE(ja["runtime"]["workers"], jb["runtime"]["workers"]);
  EXPECT_EQ(deterministic_view(ja).dump(), deterministic_view(jb).dump());
  EXPECT_TRUE(deterministic_view(ja).contains("results"));
}

TEST(Trials, IndependentOfWorkerCount) {
  auto body = [](std::size_t t, std::uint64_t s) {
    Rng rng(s);
    return std::to_string(t) + ":" + std::to_string(rng());
  };
  const auto a = run_trials(17, 1, 99, "demo", body);
  const auto b = run_trials(17, 4, 99, "demo", body);
  EXPECT_EQ(a, b);
  EXPECT_NE(run_trials(3, 1, 99, "demo", body), run_trials(3, 1, 99, "other", body));
}

TEST(Trials, ErrorsPropagate) {
  EXPECT_THROW(run_trials(4, 2, 1, "x",
                          [](std::size_t t, std::uint64_t) -> int {
                            if (t == 2) throw std::runtime_error("boom");
                            return 0;
                          }),
               std::runtime_error);
}

TEST(OracleService, ProtocolExamples) {
  OracleService svc(MallowsMixture(MallowsModel(0.0, Permutation{1, 2, 3})));
  EXPECT_EQ(svc.handle_line("Q 0.1 1:1"), "A 1.0 100.0");
  EXPECT_EQ(svc.handle_line("Q 0.1 1:1 1:2"), "E duplicate element");
  EXPECT_EQ(svc.handle_line("Q 0.1 2:2\r"), "A 1.0 200.0");
  EXPECT_EQ(svc.handle_line("Q 0.1 2:3"), "A 0.0 300.0");
  EXPECT_EQ(svc.query_count(), 3u);
}

TEST(OracleService, MalformedRequestsAreNotCharged) {
  OracleService svc(MallowsMixture(MallowsModel(0.5, Permutation::identity(4))));
  for (const char* bad : {"", "X 0.1 1:1", "Q", "Q abc 1:1", "Q 0 1:1", "Q -0.1 1:1", "Q 0.1 1-1",
                          "Q 0.1 1:", "Q 0.1 9:1", "Q 0.1 1:9", "Q 0.1 1:1 2:1", "Q 0.1"})
    EXPECT_EQ(svc.handle_line(bad).substr(0, 2), "E ") << bad;
  EXPECT_EQ(svc.query_count(), 0u);
  EXPECT_EQ(svc.ledger_json()["total_cost_exact"], "0");
}

TEST(OracleService, ExactAnswerMatchesEngineAndSampledIsClose) {
  const auto mix = mixture_from_json(json::parse(kMixtureJson));
  OracleService exact(mix), sampled(mix, OracleService::Backing::sampled, 200000, 3);
  const MixtureQueryEngine eng(mix);
  const PlacementQuery q{{{2, 3}, {4, 1}}};
  const auto a = exact.handle_line("Q 0.01 2:3 4:1");
  std::istringstream in(a);
  std::string tag;
  double v, cost;
  in >> tag >> v >> cost;
  EXPECT_EQ(tag, "A");
  EXPECT_DOUBLE_EQ(v, eng.exact(q));
  EXPECT_DOUBLE_EQ(cost, 10000.0);
  std::istringstream in2(sampled.handle_line("Q 0.01 2:3 4:1"));
  in2 >> tag >> v;
  EXPECT_NEAR(v, eng.exact(q), 0.01);
}

TEST(OracleService, FormatNumber) {
  EXPECT_EQ(format_number(1.0), "1.0");
  EXPECT_EQ(format_number(100.0), "100.0");
  EXPECT_EQ(format_number(0.25), "0.25");
  EXPECT_EQ(format_number(1e-20), "1e-20");
}

TEST(OracleService, ServesOverSocketAcrossConnections) {
  OracleService svc(MallowsMixture(MallowsModel(0.0, Permutation{1, 2, 3})));
  std::atomic<bool> stop{false};
  std::atomic<int> port{0};
  std::thread server([&] { serve(svc, 0, stop, [&](int p) { port = p; }); });
  for (int i = 0; i < 200 && port == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  ASSERT_NE(port.load(), 0);
  auto exchange = [&](const std::vector<std::string>& reqs) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port.load()));
    EXPECT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
    std::string all;
    for (const auto& r : reqs) all += r + "\n";
    all += "BYE\n";
    EXPECT_TRUE(detail::send_all(fd, all));
    std::string got;
    char buf[1024];
    ssize_t n;
    while ((n = ::recv(fd, buf, sizeof buf, 0)) > 0) got.append(buf, static_cast<std::size_t>(n));
    ::close(fd);
    return lines_of(got);
  };
  EXPECT_EQ(exchange({"Q 0.1 1:1", "Q 0.1 1:2 3:2"}), (std::vector<std::string>{"A 1.0 100.0", "E duplicate position"}));
  EXPECT_EQ(exchange({"Q 0.1 2:2"}), (std::vector<std::string>{"A 1.0 200.0"}));
  stop = true;
  server.join();
  EXPECT_EQ(svc.query_count(), 2u);
}

TEST(Cli, ZagierExample) {
  const auto r = run_lab("zagier --n 3 --phi 1/2");
  ASSERT_EQ(r.status, 0);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["results"]["equal"], true);
  EXPECT_EQ(j["status"], "pass");
  EXPECT_EQ(j["subcommand"], "zagier");
}

TEST(Cli, SampleWritesCountLines) {
  TempDir d;
  const auto cfg = d.file("m.json", kMixtureJson);
  const auto r = run_lab("sample --config " + cfg + " --count 1000 --seed 7");
  ASSERT_EQ(r.status, 0);
  const auto ls = lines_of(r.out);
  ASSERT_EQ(ls.size(), 1000u);
  for (const auto& l : ls) EXPECT_EQ(parse_permutation(l).n(), 4);
}

TEST(Cli, SampleIsIndependentOfWorkers) {
  TempDir d;
  const auto cfg = d.file("m.json", kMixtureJson);
  const auto a = run_lab("sample --config " + cfg + " --count 20000 --seed 7 --workers 1");
  const auto b = run_lab("sample --config " + cfg + " --count 20000 --seed 7 --workers 3");
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, run_lab("sample --config " + cfg + " --count 20000 --seed 8").out);
}

TEST(Cli, RecordsAreAppendedAsJsonLines) {
  TempDir d;
  const auto rec = d.file("rec.jsonl");
  ASSERT_EQ(run_lab("zagier --n 2 --phi 1/3 --out " + rec).status, 0);
  ASSERT_EQ(run_lab("zagier --n 2 --phi 2/3 --out " + rec).status, 0);
  std::ifstream in(rec);
  std::string l1, l2, l3;
  ASSERT_TRUE(std::getline(in, l1));
  ASSERT_TRUE(std::getline(in, l2));
  EXPECT_FALSE(std::getline(in, l3));
  EXPECT_EQ(json::parse(l1)["config"]["phi"][0], "1/3");
  EXPECT_EQ(json::parse(l2)["config"]["phi"][0], "2/3");
}

TEST(Cli, LearnSeparatedRerunIsIdenticalAcrossWorkers) {
  TempDir d;
  const auto cfg = d.file("s.json", R"({"n": 8, "components": [{"phi": 0.2, "center": [1,2,3,4,5,6,7,8]},
    {"phi": 0.6, "center": [8,6,3,1,7,2,5,4]}], "weights": [0.5, 0.5]})");
  const std::string args = "learn-separated --config " + cfg +
                           " --samples 20000 --trials 2 --gamma 0.4 --alpha 0.4 --theta 0.04 --prefix-len 4 --seed 7";
  const auto a = run_lab(args + " --workers 1");
  const auto b = run_lab(args + " --workers 2");
  const auto c = run_lab(args + " --workers 1");
  const auto ja = json::parse(a.out), jb = json::parse(b.out), jc = json::parse(c.out);
  EXPECT_EQ(deterministic_view(ja).dump(), deterministic_view(jb).dump());
  EXPECT_EQ(deterministic_view(ja).dump(), deterministic_view(jc).dump());
  EXPECT_EQ(ja["results"]["trials"].size(), 2u);
}

TEST(Cli, FailedCheckGivesNonzeroExitAndRecord) {
  TempDir d;
  const auto cfg = d.file("s.json", R"({"n": 8, "components": [{"phi": 0.2, "center": [1,2,3,4,5,6,7,8]},
    {"phi": 0.6, "center": [8,6,3,1,7,2,5,4]}], "weights": [0.5, 0.5]})");
  const auto r = run_lab("learn-separated --config " + cfg +
                         " --samples 20000 --gamma 0.4 --alpha 0.4 --theta 0.04 --prefix-len 4 --seed 7 --assert-tol 0");
  EXPECT_EQ(r.status, 1);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["status"], "fail");
  bool found = false;
  for (const auto& c : j["checks"])
    if (!c["holds"].get<bool>()) {
      found = true;
      EXPECT_GT(c["measured"].get<double>(), c["bound"].get<double>());
      EXPECT_EQ(c["check"], "parameter-accuracy");
    }
  EXPECT_TRUE(found);
}

TEST(Cli, ConfigErrorsAreFieldLevel) {
  TempDir d;
  const auto bad = d.file("bad.json", R"({"n": 3, "components": [{"phi": 0.5, "center": [1,2,2]}], "weights": [1]})");
  const auto r = run_lab("pmf --config " + bad + " --all");
  EXPECT_EQ(r.status, 2);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["error"]["kind"], "config");
  EXPECT_NE(j["error"]["message"].get<std::string>().find("components[0].center"), std::string::npos);
  EXPECT_NE(run_lab("zagier --n 9").status, 0);
}

TEST(Cli, LowerboundAndSqlVerifyPass) {
  const auto a = run_lab("lowerbound verify --k 2 --mu 0.01 --n 7 --variant k");
  ASSERT_EQ(a.status, 0);
  EXPECT_LE(json::parse(a.out)["results"]["exact_tv"].get<double>(), 0.32);
  const auto b = run_lab("sql verify --ell 2 --n 8");
  ASSERT_EQ(b.status, 0);
  EXPECT_EQ(json::parse(b.out)["results"]["small_queries"], 64);
  EXPECT_EQ(run_lab("sql build --ell 2 --n 6").status, 2);
}

TEST(Cli, EnumerationCutoffOverride) {
  TempDir d;
  const auto cfg = d.file("big.json", R"({"n": 9, "components": [{"phi": 0.5, "center": [1,2,3,4,5,6,7,8,9]}], "weights": [1]})");
  EXPECT_EQ(run_lab("pmf --config " + cfg + " --all --out /dev/null").status, 3);
  EXPECT_EQ(run_lab("pmf --config " + cfg + " --perm \"2 1 3 4 5 6 7 8 9\"").status, 0);
}

TEST(Cli, OracleServeAnswersAndPersistsLedger) {
  TempDir d;
  const auto cfg = d.file("p.json", R"({"n": 3, "components": [{"phi": 0.0, "center": [1,2,3]}], "weights": [1]})");
  const auto port_file = d.file("port.txt"), ledger = d.file("ledger.json"), rec = d.file("rec.jsonl");
  const std::string cmd = std::string(MALLOWS_LAB_BINARY) + " oracle-serve --config " + cfg + " --port-file " +
                          port_file + " --ledger " + ledger + " --out " + rec + " --max-seconds 3 2>/dev/null &";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  int port = 0;
  for (int i = 0; i < 300 && port == 0; ++i) {
    std::ifstream in(port_file);
    if (!(in >> port)) port = 0;
    if (port == 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ASSERT_NE(port, 0);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  ASSERT_TRUE(detail::send_all(fd, "Q 0.1 1:1\nQ 0.1 1:1 1:2\nQ 0.1 2:2\nBYE\n"));
  std::string got;
  char buf[512];
  ssize_t n;
  while ((n = ::recv(fd, buf, sizeof buf, 0)) > 0) got.append(buf, static_cast<std::size_t>(n));
  ::close(fd);
  EXPECT_EQ(lines_of(got), (std::vector<std::string>{"A 1.0 100.0", "E duplicate element", "A 1.0 200.0"}));
  for (int i = 0; i < 600 && !fs::exists(rec); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  ASSERT_TRUE(fs::exists(ledger));
  const auto lj = read_json_file(ledger);
  EXPECT_EQ(lj["count"], 2);
  EXPECT_EQ(lj["total_cost_exact"], "200");
}

}  // namespace
}  // namespace mallows
