/*
 * Copyright 2026 The SPMix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "spmix/config.hpp"
#include "spmix/error.hpp"

using namespace spmix;
namespace fs = std::filesystem;

TEST_SUITE("config") {

TEST_CASE("text round-trip restores every key") {
  RunConfig config;
  config.set("seed", "77");
  config.set("train.variant", "vanilla-mixup");
  config.set("optim.lr", "0.000123");
  config.set("saliency.windows", "3,5");
  config.set("encoder.stem", "patchify");
  RunConfig back;
  apply_config_text(back, config.to_text(), "memory");
  for (const auto& key : RunConfig::keys()) {
    CAPTURE(key);
    CHECK(back.get(key) == config.get(key));
    CHECK_FALSE(RunConfig::describe(key).empty());
  }
  CHECK(back.to_text() == config.to_text());
}

TEST_CASE("errors carry the origin and line") {
  RunConfig config;
  try {
    apply_config_text(config, "# comment\nseed = 1\nno.such.key = 3\n", "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("run.cfg:3") != std::string::npos);
    CHECK(what.find("no.such.key") != std::string::npos);
  }
  CHECK_THROWS_AS(config.set("train.epochs", "many"), ConfigError);
  CHECK_THROWS_AS(config.set("train.variant", "paco"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(config, "seed 5\n", "x"), ConfigError);
}

TEST_CASE("later sources override earlier ones") {
  const fs::path path = fs::temp_directory_path() / "spmix_unit_config.cfg";
  {
    std::ofstream(path) << "saliency.alpha = 0.5\ntrain.epochs = 3\n";
  }
  RunConfig config;
  config.set("saliency.alpha", "0.9");
  apply_config_file(config, path);
  CHECK(config.get("saliency.alpha") == "0.5");
  config.set("train.epochs", "7");
  CHECK(config.get("train.epochs") == "7");
  CHECK_THROWS_AS(apply_config_file(config, path.string() + ".missing"), IoError);
}

TEST_CASE("resolved train config follows the encoder and the variant") {
  RunConfig config;
  config.set("encoder.grid", "4");
  config.set("train.variant", "patch-only");
  const TrainConfig train = config.resolved_train();
  CHECK(train.mix.ratio.grid == 4);
  CHECK(train.mix.strategy == MixStrategy::kRandomPatch);
}

TEST_CASE("validation") {
  RunConfig config;
  CHECK_NOTHROW(config.validate());
  config.set("saliency.alpha", "1.5");
  CHECK_THROWS(config.validate());
}

}  // TEST_SUITE
