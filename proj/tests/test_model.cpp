#include <doctest.h>

#include <cmath>
#include <cstring>
#include <thread>

#include "oracles.hpp"
#include "testutil.hpp"
#include "xrnet/gradcheck.hpp"
#include "xrnet/model.hpp"

using namespace xrnet;

namespace {

// Small stack that trains in well under a second.
ModelConfig tiny_config() {
    ModelConfig config;
    config.input_size = 16;
    config.channels = 1;
    config.conv_filters = {2, 2};
    config.kernel = 3;
    config.padding = 2;
    config.fc_widths = {8};
    config.dropout_rate = 0.0;
    config.num_classes = 2;
    config.seed = 99;
    return config;
}

}  // namespace

TEST_CASE("shape trace of the default configuration") {
    const ShapeTrace trace = compute_shape_trace(ModelConfig{});
    // conv growth by 2 per block with floor pooling: 256 -> 258 -> 129 ->
    // 131 -> 65 -> 67 -> 33, flattening to 33*33*128.
    REQUIRE(trace.entries.size() == 10);
    CHECK(trace.entries[0].input == "256x256x1");
    CHECK(trace.entries[0].output == "258x258x64");
    CHECK(trace.entries[1].output == "129x129x64");
    CHECK(trace.entries[2].output == "131x131x128");
    CHECK(trace.entries[3].output == "65x65x128");
    CHECK(trace.entries[4].output == "67x67x128");
    CHECK(trace.entries[5].output == "33x33x128");
    CHECK(trace.flatten_size == 139392);
    CHECK(trace.entries[6].output == "139392");
    CHECK(trace.entries[7].output == "1024");
    CHECK(trace.entries[8].output == "1024");
    CHECK(trace.entries[9].output == "2");
}

TEST_CASE("shape trace of a 32-pixel variant") {
    ModelConfig config;
    config.input_size = 32;
    config.conv_filters = {4, 4, 4};
    config.fc_widths = {8, 8};
    const ShapeTrace trace = compute_shape_trace(config);
    CHECK(trace.entries[0].output == "34x34x4");
    CHECK(trace.entries[1].output == "17x17x4");
    CHECK(trace.entries[2].output == "19x19x4");
    CHECK(trace.entries[3].output == "9x9x4");
    CHECK(trace.entries[4].output == "11x11x4");
    CHECK(trace.entries[5].output == "5x5x4");
    CHECK(trace.flatten_size == 100);
}

TEST_CASE("too-small input cannot survive three blocks") {
    ModelConfig config;
    config.input_size = 4;
    config.conv_filters = {4, 4, 4};
    config.fc_widths = {8};
    CHECK_THROWS_WITH_AS(compute_shape_trace(config), doctest::Contains("conv3"),
                         ConfigError);
}

TEST_CASE("forward produces probability rows") {
    Model<float> model = Model<float>::build(tiny_config());
    Rng rng(1);
    Tensor<float> batch({3, 16, 16, 1});
    for (auto& v : batch) {
        v = static_cast<float>(rng.uniform());
    }
    const auto probs = model.forward(batch, Mode::eval);
    REQUIRE(probs.shape() == std::vector<std::size_t>{3, 2});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(probs(i, std::size_t{0}) + probs(i, std::size_t{1}) ==
              doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("duplicate images in a batch produce identical rows in eval mode") {
    Model<float> model = Model<float>::build(tiny_config());
    Rng rng(2);
    Tensor<float> batch({2, 16, 16, 1});
    for (std::size_t i = 0; i < 16 * 16; ++i) {
        const float v = static_cast<float>(rng.uniform());
        batch[i] = v;
        batch[16 * 16 + i] = v;
    }
    const auto probs = model.forward(batch, Mode::eval);
    CHECK(probs(std::size_t{0}, std::size_t{0}) == probs(std::size_t{1}, std::size_t{0}));
    CHECK(probs(std::size_t{0}, std::size_t{1}) == probs(std::size_t{1}, std::size_t{1}));
}

TEST_CASE("eval-mode forward is pure: repeated calls are bit-identical") {
    Model<float> model = Model<float>::build(tiny_config());
    Rng rng(3);
    Tensor<float> batch({2, 16, 16, 1});
    for (auto& v : batch) {
        v = static_cast<float>(rng.uniform());
    }
    const auto a = model.forward(batch, Mode::eval);
    const auto b = model.forward(batch, Mode::eval);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("training with learning rate zero is a null update") {
    const Dataset dataset = testutil::synthetic_dataset(4, 16, 77);
    Model<float> model = Model<float>::build(tiny_config());
    std::vector<std::vector<float>> before;
    for (const Param<float>* p : model.parameters()) {
        before.push_back(p->value.values());
    }
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 4;
    config.learning_rate = 0.0;
    config.seed = 5;
    const TrainingHistory history = train_model(model, dataset, config);
    std::size_t i = 0;
    for (const Param<float>* p : model.parameters()) {
        CHECK(p->value.values() == before[i++]);
    }
    REQUIRE(history.epochs.size() == 3);
    CHECK(std::fabs(history.epochs[0].loss - history.epochs[2].loss) < 1e-12);
}

TEST_CASE("training is reproducible for a fixed seed") {
    const Dataset dataset = testutil::synthetic_dataset(4, 16, 78);
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 4;
    config.learning_rate = 0.001;
    config.seed = 6;
    const auto run = [&]() {
        Model<float> model = Model<float>::build(tiny_config());
        return train_model(model, dataset, config);
    };
    const TrainingHistory a = run();
    const TrainingHistory b = run();
    CHECK(a.to_csv() == b.to_csv());
}

TEST_CASE("history has one finite entry per epoch") {
    const Dataset dataset = testutil::synthetic_dataset(3, 16, 79);
    Model<float> model = Model<float>::build(tiny_config());
    TrainConfig config;
    config.epochs = 5;
    config.batch_size = 2;
    config.seed = 7;
    const TrainingHistory history = train_model(model, dataset, config);
    REQUIRE(history.epochs.size() == 5);
    for (std::size_t e = 0; e < 5; ++e) {
        CHECK(history.epochs[e].epoch == e + 1);
        CHECK(std::isfinite(history.epochs[e].loss));
        CHECK(history.epochs[e].train_accuracy >= 0.0);
        CHECK(history.epochs[e].train_accuracy <= 1.0);
    }
}

TEST_CASE("training on an empty dataset is a data error") {
    Dataset empty;
    empty.class_names = {"a", "b"};
    Model<float> model = Model<float>::build(tiny_config());
    CHECK_THROWS_AS(train_model(model, empty, TrainConfig{}), DataError);
}

TEST_CASE("loss strictly decreases over the first SGD steps on separable data") {
    const Dataset dataset = testutil::synthetic_dataset(8, 16, 80);
    Model<float> model = Model<float>::build(tiny_config());
    TrainConfig config;
    config.epochs = 5;  // full-batch: one step per epoch
    config.batch_size = dataset.size();
    config.learning_rate = 0.01;
    config.optimizer = "sgd";
    config.seed = 8;
    const TrainingHistory history = train_model(model, dataset, config);
    for (std::size_t e = 1; e < history.epochs.size(); ++e) {
        CHECK(history.epochs[e].loss < history.epochs[e - 1].loss);
    }
}

TEST_CASE("predict breaks ties toward the lower class index") {
    SUBCASE("explicit rows") {
        Tensor<float> probs({2, 2}, {0.9f, 0.1f, 0.5f, 0.5f});
        const auto classes = argmax_rows(probs);
        CHECK(classes[0] == 0);
        CHECK(classes[1] == 0);  // tie rule
    }
    SUBCASE("agreement with a scan oracle over 100 random rows") {
        Rng rng(9);
        for (int trial = 0; trial < 100; ++trial) {
            Tensor<float> row({1, 4});
            for (auto& v : row) {
                v = static_cast<float>(rng.uniform());
            }
            int expected = 0;
            for (int j = 1; j < 4; ++j) {
                if (row[static_cast<std::size_t>(j)] >
                    row[static_cast<std::size_t>(expected)]) {
                    expected = j;
                }
            }
            CHECK(argmax_rows(row)[0] == expected);
        }
    }
}

TEST_CASE("end-to-end gradients of the tiny model match finite differences") {
    CHECK(check_model_gradients(321) < 1e-4);
}

TEST_CASE("parameters initialize He-normal with zero biases") {
    ModelConfig config;
    config.input_size = 16;
    config.conv_filters = {4};
    config.fc_widths = {64};
    config.dropout_rate = 0.0;
    config.seed = 2718;
    Model<float> model = Model<float>::build(config);
    const auto params = model.parameters();
    // fc1 weights: fan_in = 9*9*4 = 324, 324*64 samples.
    const Param<float>* fc1 = nullptr;
    for (const Param<float>* p : params) {
        if (p->name == "fc1.weights") {
            fc1 = p;
        }
        if (p->name.ends_with(".bias")) {
            for (const float v : p->value) {
                CHECK(v == 0.0f);
            }
        }
    }
    REQUIRE(fc1 != nullptr);
    double mean = 0.0, sq = 0.0;
    for (const float v : fc1->value) {
        mean += v;
        sq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(fc1->value.size());
    mean /= n;
    const double std_dev = std::sqrt(sq / n - mean * mean);
    const double expected = std::sqrt(2.0 / 324.0);
    CHECK(std::fabs(mean) < 5.0 * expected / std::sqrt(n));
    CHECK(std_dev == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("same build seed gives identical parameters, different seeds differ") {
    const ModelConfig config = tiny_config();
    Model<float> a = Model<float>::build(config);
    Model<float> b = Model<float>::build(config);
    ModelConfig other = config;
    other.seed = config.seed + 1;
    Model<float> c = Model<float>::build(other);
    CHECK(a.parameters()[0]->value.values() == b.parameters()[0]->value.values());
    CHECK(a.parameters()[0]->value.values() != c.parameters()[0]->value.values());
}

TEST_CASE("batch shape mismatches are rejected as data errors") {
    Model<float> model = Model<float>::build(tiny_config());
    CHECK_THROWS_AS(model.forward(Tensor<float>({2, 8, 8, 1}), Mode::eval), DataError);
}

TEST_CASE("concurrent eval-mode forwards agree with the sequential result") {
    Model<float> model = Model<float>::build(tiny_config());
    Rng rng(15);
    Tensor<float> batch({2, 16, 16, 1});
    for (auto& v : batch) {
        v = static_cast<float>(rng.uniform());
    }
    const auto expected = model.forward(batch, Mode::eval);

    std::vector<Tensor<float>> results(4);
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < results.size(); ++t) {
        workers.emplace_back(
            [&, t]() { results[t] = model.forward(batch, Mode::eval); });
    }
    for (std::thread& w : workers) {
        w.join();
    }
    for (const auto& result : results) {
        CHECK(result == expected);
    }
}
