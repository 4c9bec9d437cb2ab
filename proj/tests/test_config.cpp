#include "../tools/config.hpp"

#include "doctest.h"

using namespace npl::cli;

TEST_CASE("config sections and overrides") {
  const auto f = parse_config(
      "seed = 4   # shared\n"
      "\n"
      "[train]\n"
      "epochs=7\n"
      "widths = 8, 16\n"
      "[memorise]\n"
      "epochs = 99\n");
  Params p("train", {{"seed", "0"}, {"epochs", "1"}, {"widths", "1"}, {"beta", ""}});
  p.apply(f);
  CHECK(p.u64("seed") == 4);
  CHECK(p.count("epochs") == 7);
  CHECK(p.counts("widths") == std::vector<std::size_t>{8, 16});
  CHECK_FALSE(p.has_value("beta"));
  p.set("beta", "2.5");
  CHECK(p.real("beta") == 2.5);
}

TEST_CASE("config errors name the offending key or line") {
  Params p("train", {{"epochs", "1"}});
  try {
    p.apply(parse_config("[train]\nlearning_rate = 3\n"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("'learning_rate'") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
  p.set("epochs", "ten");
  CHECK_THROWS_AS(p.count("epochs"), ConfigError);
  p.set("epochs", "-1");
  CHECK_THROWS_AS(p.count("epochs"), ConfigError);
  // unrelated sections are ignored
  CHECK_NOTHROW(p.apply(parse_config("[kernel]\nkind = NPK\n")));
}
