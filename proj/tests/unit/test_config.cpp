#include <string>

#include "doctest.h"
#include "ewflow/config.hpp"

using namespace ewflow;

namespace {

// Runs fn and returns the ConfigError it throws.
template <class F>
ConfigError expect_error(F&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError("", 0, "", "");
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parses keys, values, comments and blank lines") {
    const Config c = Config::parse_string(
        "# training run\n"
        "dataset = 8gaussians\n"
        "\n"
        "  energy.beta=2.5   # trailing comment\n"
        "model.hidden = 64, 64,64\n"
        "cosine_lr = off\n"
        "seed = 18446744073709551615\n");
    CHECK(c.get_string("dataset") == "8gaussians");
    CHECK(c.get_double("energy.beta", 0.0) == 2.5);
    CHECK(c.get_ints("model.hidden", {}) == std::vector<int>{64, 64, 64});
    CHECK_FALSE(c.get_bool("cosine_lr", true));
    CHECK(c.get_u64("seed", 0) == 18446744073709551615ULL);
    CHECK(c.line_of("energy.beta") == 4);
    CHECK(c.keys().size() == 5);
  }

  TEST_CASE("fallbacks apply only to missing keys") {
    const Config c = Config::parse_string("steps = 10\n");
    CHECK(c.get_int("steps", 5) == 10);
    CHECK(c.get_int("batch", 256) == 256);
    CHECK(c.get_string("loss", "ced") == "ced");
    CHECK(c.get_doubles("betas", {1.0, 2.0}) == std::vector<double>{1.0, 2.0});
    const auto e = expect_error([&] { c.get_string("loss"); });
    CHECK(e.key() == "loss");
    CHECK(std::string(e.what()).find("missing required key 'loss'") != std::string::npos);
  }

  TEST_CASE("syntax errors carry the line number") {
    const auto e = expect_error([] { Config::parse_string("a = 1\nthis line has no equals\n", "run.cfg"); });
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).rfind("run.cfg:2:", 0) == 0);

    const auto bad_key = expect_error([] { Config::parse_string("ok = 1\n\nbad..key = 2\n"); });
    CHECK(bad_key.line() == 3);
    CHECK(bad_key.key() == "bad..key");
  }

  TEST_CASE("duplicate keys are rejected") {
    const auto e = expect_error([] { Config::parse_string("steps = 1\nbatch = 2\nsteps = 3\n"); });
    CHECK(e.line() == 3);
    CHECK(e.key() == "steps");
    CHECK(std::string(e.what()).find("first set on line 1") != std::string::npos);
  }

  TEST_CASE("typed getters reject malformed values") {
    const Config c = Config::parse_string("steps = 10k\nlr = fast\nflag = maybe\nhidden = 64,,x\nseed = -1\n");
    CHECK(expect_error([&] { c.get_int("steps", 0); }).line() == 1);
    CHECK(expect_error([&] { c.get_double("lr", 0.0); }).key() == "lr");
    CHECK(expect_error([&] { c.get_bool("flag", false); }).line() == 3);
    CHECK(expect_error([&] { c.get_ints("hidden", {}); }).key() == "hidden");
    CHECK(expect_error([&] { c.get_u64("seed", 0); }).key() == "seed");
  }

  TEST_CASE("unknown keys are reported") {
    const Config c = Config::parse_string("dataset = gaussian\nlos = ced\nsteps = 3\n");
    CHECK_NOTHROW(Config::parse_string("steps = 3\n").require_known({"steps", "dataset"}));
    const auto e = expect_error([&] { c.require_known({"dataset", "loss", "steps"}); });
    CHECK(e.key() == "los");
    CHECK(e.line() == 2);
  }

  TEST_CASE("overrides and canonical text") {
    Config c = Config::parse_string("b = 2\na = 1\n");
    c.set("a", "10");
    c.set("c.d", "x");
    CHECK(c.get_int("a", 0) == 10);
    CHECK(c.to_text() == "a = 10\nb = 2\nc.d = x\n");
    CHECK(Config::parse_string(c.to_text()).to_text() == c.to_text());
    CHECK_THROWS_AS(c.set("bad key", "1"), ConfigError);
  }

  TEST_CASE("missing files") {
    const auto e = expect_error([] { Config::load("/nonexistent/ewflow.cfg"); });
    CHECK(e.line() == 0);
  }
}
