#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "latsched/errors.hpp"
#include "latsched/inference.hpp"
#include "latsched/rng.hpp"

#include <cmath>

using namespace latsched;

namespace {

PipelineConfig small_config(std::uint64_t seed = 1) {
    PipelineConfig cfg;
    cfg.n_kernels = 8;
    cfg.n_levels = 10;
    cfg.bootstrap_rows = 24;
    cfg.seed = seed;
    return cfg;
}

AppSpec convention_app(AppId id, const Cluster& cluster, double peak, double phi,
                       ResourceVector sensitivity, ResourceVector pressure) {
    AppSpec spec;
    spec.id = id;
    spec.freq_sensitivity = phi;
    spec.sensitivity = sensitivity;
    spec.pressure = pressure;
    const double ref =
        cluster.core_classes.at(cluster.profiling_core_class).effective_speed();
    spec.base_throughput.clear();
    for (const auto& cc : cluster.core_classes)
        spec.base_throughput.push_back(peak * std::pow(cc.effective_speed() / ref, phi));
    return spec;
}

} // namespace

TEST_CASE("profile_reference: three observations, seed-deterministic kernels") {
    const auto cluster = make_cmp_cluster();
    const auto run_once = [&] {
        World world(cluster, 5, 0.0);
        StagedPipeline pipeline(small_config(9), cluster);
        ResourceVector s{};
        s.fill(0.3);
        auto app = convention_app(0, cluster, 50.0, 0.3, s, s);
        world.add_app(app);
        pipeline.attach_app(0);
        auto observations = pipeline.profile_reference(0, world);
        auto density = pipeline.matrix().row_density(pipeline.row_of(0).value());
        return std::make_pair(std::move(observations), density);
    };
    const auto [obs1, density1] = run_once();
    const auto [obs2, density2] = run_once();
    REQUIRE(obs1.size() == 3); // isolation + two kernels
    CHECK(density1 == 3);
    CHECK(density2 == 3);
    CHECK(obs1[0].column.tag == ColumnKind::Tag::isolation);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(obs1[i].column == obs2[i].column);
        CHECK(obs1[i].value == obs2[i].value);
        CHECK(obs1[i].sim_duration == doctest::Approx(2.0));
    }
    CHECK(obs1[1].column.tag == ColumnKind::Tag::kernel);
    CHECK(obs1[2].column.tag == ColumnKind::Tag::kernel);
    CHECK(obs1[1].column.kernel_id != obs1[2].column.kernel_id);
}

TEST_CASE("zero-sensitivity app profiles flat across kernels") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 5, 0.0); // noiseless
    StagedPipeline pipeline(small_config(), cluster);
    ResourceVector zero{};
    auto app = convention_app(0, cluster, 42.0, 0.0, zero, zero);
    world.add_app(app);
    pipeline.attach_app(0);
    const auto obs = pipeline.profile_reference(0, world);
    for (const auto& o : obs) CHECK(o.value == doctest::Approx(42.0));
}

TEST_CASE("busy profiling station raises a retriable error") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 5, 0.0);
    StagedPipeline pipeline(small_config(), cluster);
    ResourceVector zero{};
    world.add_app(convention_app(0, cluster, 42.0, 0.0, zero, zero));
    pipeline.attach_app(0);
    world.set_station_busy(true);
    CHECK_THROWS_AS(pipeline.profile_reference(0, world), busy_error);
}

TEST_CASE("run_sgd1 completes the reference block and preserves observations") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 7, 0.0);
    StagedPipeline pipeline(small_config(3), cluster);

    const auto mix = generate_mix(20, 21, cluster);
    for (const auto& spec : mix) {
        world.add_app(spec);
        pipeline.attach_app(spec.id);
        pipeline.profile_reference(spec.id, world);
    }
    const auto report = pipeline.run_sgd1();
    CHECK(report.stage == 1);
    CHECK(report.columns_completed == pipeline.matrix().reference_width());

    // Observed cells preserved exactly.
    for (const auto& [key, value] : pipeline.matrix().entries())
        CHECK(pipeline.estimate(key.first, key.second) == doctest::Approx(value));

    // Holdout error vs the station oracle over withheld kernel cells, as a
    // fraction of each app's isolation throughput.
    double err = 0.0;
    std::size_t n = 0;
    for (const auto& spec : mix) {
        const auto row = pipeline.row_of(spec.id).value();
        const double iso = world.station_truth(spec, nullptr);
        for (std::size_t col = 1; col < pipeline.matrix().reference_width(); ++col) {
            if (pipeline.matrix().is_observed(row, col)) continue;
            const auto& kind = pipeline.matrix().column(col);
            const auto kernel = make_kernel_app(kind.kernel_id, kind.intensity_level, cluster);
            const double truth = world.station_truth(spec, &kernel);
            err += std::abs(pipeline.estimate(row, col) - truth) / iso;
            ++n;
        }
    }
    CHECK(err / static_cast<double>(n) <= 0.15);
}

TEST_CASE("sensitivity readout recovers a densely profiled app") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 11, 0.0);
    PipelineConfig cfg = small_config(5);
    StagedPipeline pipeline(cfg, cluster);

    ResourceVector s{};
    s[kDimCpu] = 0.7;
    s[kDimMemBandwidth] = 0.4;
    auto app = convention_app(0, cluster, 60.0, 0.7, s, s);
    world.add_app(app);
    const auto row = pipeline.attach_app(0);

    // Exhaustive offline-style profile of this app.
    for (std::size_t col = 0; col < pipeline.matrix().reference_width(); ++col) {
        const auto& kind = pipeline.matrix().column(col);
        double truth;
        if (kind.tag == ColumnKind::Tag::isolation) {
            truth = world.station_truth(app, nullptr);
        } else {
            const auto kernel = make_kernel_app(kind.kernel_id, kind.intensity_level, cluster);
            truth = world.station_truth(app, &kernel);
        }
        pipeline.mutable_matrix().insert(row, col, truth);
    }
    pipeline.run_sgd1();
    const auto readout = pipeline.sensitivity_readout(0);
    CHECK(readout[kDimCpu] == doctest::Approx(0.7).epsilon(0.1));
    CHECK(readout[kDimMemBandwidth] == doctest::Approx(0.4).epsilon(0.15));
    CHECK(readout[kDimStorageCapacity] < 0.1);
    CHECK(pipeline.isolation_estimate(0) == doctest::Approx(60.0).epsilon(0.02));
}

TEST_CASE("partial placement probes populate the realized mapping column") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 13, 0.0);
    StagedPipeline pipeline(small_config(7), cluster);

    const auto mix = generate_mix(4, 31, cluster);
    for (const auto& spec : mix) {
        world.add_app(spec);
        pipeline.attach_app(spec.id);
        pipeline.profile_reference(spec.id, world);
    }
    pipeline.run_sgd1();

    SUBCASE("first app on an empty platform: one observation") {
        const auto cols = pipeline.profile_partial_placements(0, world);
        REQUIRE(cols.size() == 1);
        std::size_t count = 0;
        for (const auto& [key, _] : pipeline.matrix().entries())
            if (key.second == cols[0]) ++count;
        CHECK(count == 1);
        CHECK(world.assignments().empty()); // probe is transient
    }

    SUBCASE("joining three residents: four observations, id matches canon") {
        world.assign(1, Slot{0, 0, 1});
        world.assign(2, Slot{0, 5, 1});
        world.assign(3, Slot{0, 9, 1});
        const auto cols = pipeline.profile_partial_placements(0, world);
        REQUIRE(cols.size() == 1);
        std::size_t count = 0;
        for (const auto& [key, _] : pipeline.matrix().entries())
            if (key.second == cols[0]) ++count;
        CHECK(count == 4);

        // The column id is the canonical id of {residents + probe slot}.
        const auto& kind = pipeline.matrix().column(cols[0]);
        const auto parsed = parse_mapping_id(kind.mapping_id);
        CHECK(parsed.size() == 4);
        CHECK(parsed.count(0) == 1);
        CHECK(parsed.at(1) == Slot{0, 0, 1});
    }

    SUBCASE("no free core escalates") {
        World packed(cluster, 13, 0.0);
        const auto residents = generate_mix(16, 77, cluster);
        for (const auto& r : residents) {
            AppSpec copy = r;
            copy.id += 100;
            packed.add_app(copy);
        }
        std::size_t core = 0;
        for (const auto& r : residents) packed.assign(r.id + 100, Slot{0, core++, 1});
        packed.add_app(convention_app(50, cluster, 10, 0.2, {}, {}));
        pipeline.attach_app(50);
        CHECK_THROWS_AS(pipeline.profile_partial_placements(50, packed), infeasible_error);
    }
}

TEST_CASE("staged completion: sgd2 covers observed columns, sgd3 the rest") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 17, 0.0);
    StagedPipeline pipeline(small_config(11), cluster);

    const auto mix = generate_mix(6, 41, cluster);
    for (const auto& spec : mix) {
        world.add_app(spec);
        pipeline.attach_app(spec.id);
        pipeline.profile_reference(spec.id, world);
    }
    pipeline.run_sgd1();
    CHECK_THROWS_AS(pipeline.run_sgd3(), std::logic_error); // stage order enforced

    const auto probed = pipeline.profile_partial_placements(0, world);
    REQUIRE(probed.size() == 1);

    // 24 candidate columns, one observed -> 23 stay all-zero through sgd2.
    std::vector<std::string> freshman;
    for (int i = 0; i < 23; ++i) {
        PlacementMapping m;
        m.assignments[0] = Slot{0, static_cast<std::size_t>(i % 16), 1};
        m.assignments[1] = Slot{0, static_cast<std::size_t>((i + 1) % 16), 1};
        freshman.push_back(m.mapping_id() + "#v" + std::to_string(i));
    }
    pipeline.concat_candidates(freshman);

    const auto r2 = pipeline.run_sgd2();
    CHECK(r2.stage == 2);
    CHECK(r2.columns_completed == 1);

    // Observed placement estimates equal their measurements.
    for (const auto& [key, value] : pipeline.matrix().entries())
        if (key.second >= pipeline.matrix().reference_width())
            CHECK(pipeline.estimate(key.first, key.second) == doctest::Approx(value));

    std::size_t not_done = 0;
    for (std::size_t col = pipeline.matrix().reference_width();
         col < pipeline.matrix().col_count(); ++col)
        if (!pipeline.column_estimated(col)) ++not_done;
    CHECK(not_done == 23);

    const auto r3 = pipeline.run_sgd3();
    CHECK(r3.stage == 3);
    CHECK(r3.columns_completed == 23);
    for (std::size_t col = 0; col < pipeline.matrix().col_count(); ++col)
        CHECK(pipeline.column_estimated(col));
    for (std::size_t row = 0; row < pipeline.matrix().row_count(); ++row)
        for (std::size_t col = 0; col < pipeline.matrix().col_count(); ++col) {
            const double e = pipeline.estimate(row, col);
            CHECK(std::isfinite(e));
            CHECK(e >= 0.0);
        }
}

TEST_CASE("sgd3 with everything observed is a no-op") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 19, 0.0);
    StagedPipeline pipeline(small_config(13), cluster);
    const auto mix = generate_mix(3, 43, cluster);
    for (const auto& spec : mix) {
        world.add_app(spec);
        pipeline.attach_app(spec.id);
        pipeline.profile_reference(spec.id, world);
    }
    pipeline.run_sgd1();
    pipeline.profile_partial_placements(0, world);
    pipeline.run_sgd2();
    const auto r3 = pipeline.run_sgd3();
    CHECK(r3.iterations == 0); // nothing left to reconstruct
    CHECK(r3.columns_completed == 0);
}

TEST_CASE("degenerate initialization range: all observations equal") {
    const auto cluster = make_cmp_cluster();
    PipelineConfig cfg = small_config(15);
    cfg.bootstrap_rows = 0;
    StagedPipeline pipeline(cfg, cluster);
    World world(cluster, 23, 0.0);

    // Two rows whose every observation is exactly v.
    const double v = 7.5;
    for (AppId id = 0; id < 2; ++id) {
        const auto row = pipeline.attach_app(id);
        pipeline.mutable_matrix().insert(row, 0, v);
        pipeline.mutable_matrix().insert(row, 1, v);
        pipeline.mutable_matrix().insert(row, 11, v);
    }
    pipeline.run_sgd1();
    std::vector<std::string> col = {"a0:s0c0f1+a1:s0c1f1"};
    pipeline.concat_candidates(col);
    const auto row0 = pipeline.row_of(0).value();
    pipeline.mutable_matrix().insert(row0, pipeline.matrix().col_count() - 1, v);
    pipeline.run_sgd2();
    std::vector<std::string> zero_col = {"a0:s0c1f1+a1:s0c0f1"};
    pipeline.concat_candidates(zero_col);
    pipeline.run_sgd3();

    // Random init collapsed to {v}; the completed estimates sit at v.
    const std::size_t last = pipeline.matrix().col_count() - 1;
    for (std::size_t row = 0; row < pipeline.matrix().row_count(); ++row)
        CHECK(pipeline.estimate(row, last) == doctest::Approx(v).epsilon(0.05));
}

TEST_CASE("rerunning the stages without new observations keeps the decision stable") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 29, 0.0);
    StagedPipeline pipeline(small_config(17), cluster);
    const auto mix = generate_mix(5, 47, cluster);
    for (const auto& spec : mix) {
        world.add_app(spec);
        pipeline.attach_app(spec.id);
        pipeline.profile_reference(spec.id, world);
    }
    pipeline.run_sgd1();
    const auto readout1 = pipeline.sensitivity_readout(2);
    pipeline.run_sgd1();
    const auto readout2 = pipeline.sensitivity_readout(2);
    for (std::size_t r = 0; r < kResourceDims; ++r)
        CHECK(readout1[r] == doctest::Approx(readout2[r]).epsilon(1e-9));
}

TEST_CASE("replace_column clears stale observations before inserting new data") {
    const auto cluster = make_cmp_cluster();
    PipelineConfig cfg = small_config(19);
    cfg.bootstrap_rows = 0;
    StagedPipeline pipeline(cfg, cluster);
    for (AppId id = 0; id < 2; ++id) {
        const auto row = pipeline.attach_app(id);
        pipeline.mutable_matrix().insert(row, 0, 10.0 + id);
    }
    pipeline.replace_column("mapX", {{0, 5.0}, {1, 6.0}});
    const auto col = pipeline.matrix().find_placement_column("mapX").value();
    CHECK(pipeline.matrix().value_at(0, col) == 5.0);
    pipeline.replace_column("mapX", {{1, 9.0}});
    CHECK(!pipeline.matrix().is_observed(0, col)); // old cells dropped
    CHECK(pipeline.matrix().value_at(1, col) == 9.0);
}

TEST_CASE("prune drops unobserved candidate columns and keeps observed ones") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 31, 0.0);
    StagedPipeline pipeline(small_config(23), cluster);
    const auto mix = generate_mix(3, 53, cluster);
    for (const auto& spec : mix) {
        world.add_app(spec);
        pipeline.attach_app(spec.id);
        pipeline.profile_reference(spec.id, world);
    }
    pipeline.run_sgd1();
    const auto probed = pipeline.profile_partial_placements(0, world);
    const auto observed_id = pipeline.matrix().column(probed[0]).mapping_id;
    std::vector<std::string> junk = {"never-observed-1", "never-observed-2"};
    pipeline.concat_candidates(junk);
    pipeline.prune_unobserved_candidates();
    CHECK(pipeline.matrix().find_placement_column(observed_id));
    CHECK(!pipeline.matrix().find_placement_column("never-observed-1"));
}

TEST_CASE("estimate provider answers observed columns from the matrix") {
    const auto cluster = make_cmp_cluster();
    World world(cluster, 37, 0.0);
    StagedPipeline pipeline(small_config(29), cluster);
    ModelEstimateProvider provider(pipeline, cluster);

    const auto mix = generate_mix(3, 59, cluster);
    for (const auto& spec : mix) {
        world.add_app(spec);
        pipeline.attach_app(spec.id);
        pipeline.profile_reference(spec.id, world);
    }
    pipeline.run_sgd1();
    const auto probed = pipeline.profile_partial_placements(0, world);
    pipeline.run_sgd2();
    pipeline.run_sgd3();

    const auto& kind = pipeline.matrix().column(probed[0]);
    const auto assignments = parse_mapping_id(kind.mapping_id);
    const PlacementMapping realized{assignments};
    const auto row = pipeline.row_of(0).value();
    const double observed = pipeline.matrix().value_at(row, probed[0]).value();
    CHECK(provider.mapping_estimate(0, realized) == doctest::Approx(observed));
    CHECK(pipeline.query_count() > 0);
}

TEST_CASE("freq_response calibrates from placement observations") {
    const auto cluster = make_cmp_cluster(); // classes span 0.72..2.4 effective
    World world(cluster, 41, 0.0);
    PipelineConfig cfg = small_config(31);
    StagedPipeline pipeline(cfg, cluster);
    ModelEstimateProvider provider(pipeline, cluster);

    ResourceVector zero{};
    auto app = convention_app(0, cluster, 50.0, 0.85, zero, zero);
    world.add_app(app);
    pipeline.attach_app(0);
    pipeline.profile_reference(0, world);
    pipeline.run_sgd1();

    // Observed placement on the slowest class reveals the speed response.
    PlacementMapping m;
    m.assignments[0] = Slot{0, 12, 1}; // inorder1 core
    pipeline.replace_column(m.mapping_id(), {{0, world.true_perf(0, m.assignments[0], {})}});
    const double phi = provider.freq_response(0);
    CHECK(phi == doctest::Approx(0.85).epsilon(0.05));
}
