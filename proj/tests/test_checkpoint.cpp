#include <doctest.h>

#include <cstring>
#include <fstream>

#include "testutil.hpp"
#include "xrnet/checkpoint.hpp"

using namespace xrnet;

namespace {

ModelConfig probe_config() {
    ModelConfig config;
    config.input_size = 12;
    config.channels = 1;
    config.conv_filters = {3};
    config.kernel = 3;
    config.padding = 2;
    config.fc_widths = {6};
    config.dropout_rate = 0.2;
    config.num_classes = 2;
    config.seed = 17;
    return config;
}

}  // namespace

TEST_CASE("checkpoint round-trip restores parameters bit-exactly") {
    testutil::TempDir dir("ckpt");
    const auto path = dir.path() / "model.ckpt";
    Model<float> model = Model<float>::build(probe_config());
    save_checkpoint(model, {"covid", "non_covid"}, path);

    LoadedModel loaded = load_checkpoint(path);
    CHECK(loaded.class_names == std::vector<std::string>{"covid", "non_covid"});
    CHECK(loaded.model.config() == model.config());

    const auto original = model.parameters();
    const auto restored = loaded.model.parameters();
    REQUIRE(original.size() == restored.size());
    for (std::size_t i = 0; i < original.size(); ++i) {
        CHECK(original[i]->name == restored[i]->name);
        CHECK(std::memcmp(original[i]->value.data(), restored[i]->value.data(),
                          original[i]->value.size() * sizeof(float)) == 0);
    }

    // Saving the restored model reproduces the file byte for byte.
    const auto path2 = dir.path() / "model2.ckpt";
    save_checkpoint(loaded.model, loaded.class_names, path2);
    CHECK(testutil::read_file(path) == testutil::read_file(path2));
}

TEST_CASE("predictions are bit-identical after a round-trip") {
    testutil::TempDir dir("ckpt_pred");
    const auto path = dir.path() / "model.ckpt";
    Model<float> model = Model<float>::build(probe_config());
    save_checkpoint(model, {"a", "b"}, path);
    LoadedModel loaded = load_checkpoint(path);

    Rng rng(4);
    Tensor<float> batch({3, 12, 12, 1});
    for (auto& v : batch) {
        v = static_cast<float>(rng.uniform());
    }
    const auto before = model.forward(batch, Mode::eval);
    const auto after = loaded.model.forward(batch, Mode::eval);
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("checkpoint failure contracts are distinct") {
    testutil::TempDir dir("ckpt_err");
    const auto path = dir.path() / "model.ckpt";
    Model<float> model = Model<float>::build(probe_config());
    save_checkpoint(model, {"a", "b"}, path);

    SUBCASE("bad magic") {
        auto bytes = testutil::read_file(path);
        bytes[0] = 'Z';
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"),
                             ArtifactError);
    }
    SUBCASE("version mismatch") {
        auto bytes = testutil::read_file(path);
        bytes[4] = 9;
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"),
                             ArtifactError);
    }
    SUBCASE("truncated mid-tensor") {
        auto bytes = testutil::read_file(path);
        bytes.resize(bytes.size() - bytes.size() / 3);
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"),
                             ArtifactError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir.path() / "nope.ckpt"), ArtifactError);
    }
}

TEST_CASE("config compatibility check catches extent mismatches") {
    ModelConfig a = probe_config();
    ModelConfig b = probe_config();
    CHECK_NOTHROW(require_compatible(a, b));
    b.input_size = 16;
    CHECK_THROWS_AS(require_compatible(a, b), ArtifactError);
    b = probe_config();
    b.conv_filters = {3, 3};
    CHECK_THROWS_AS(require_compatible(a, b), ArtifactError);
}
