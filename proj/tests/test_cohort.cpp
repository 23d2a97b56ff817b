#include "synfair/cohort.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace synfair;
using namespace synfair::cohort;

namespace {

DemographicGroup test_group(double mean = 0.7, double spread = 0.0) {
    DemographicGroup g;
    g.id = 0;
    g.name = "g0";
    g.albedo_mean = mean;
    g.albedo_spread = spread;
    return g;
}

double image_mean(const Observation& o) {
    double s = 0.0;
    for (float p : o.pixels) s += p;
    return s / static_cast<double>(o.pixels.size());
}

}  // namespace

TEST(SampleIdentity, ZeroVarianceGroupGivesExactMean) {
    Rng rng(1);
    const auto id = sample_identity(test_group(0.7, 0.0), rng, 5);
    EXPECT_DOUBLE_EQ(id.albedo, 0.7);
    EXPECT_EQ(id.identity_id, 5);
    EXPECT_EQ(id.latent.size(), static_cast<std::size_t>(kIdentityDim));
}

TEST(SampleIdentity, SameSeedIsBitIdentical) {
    Rng a(42), b(42);
    const auto ia = sample_identity(test_group(0.6, 0.05), a);
    const auto ib = sample_identity(test_group(0.6, 0.05), b);
    EXPECT_EQ(ia.latent, ib.latent);
    EXPECT_EQ(ia.albedo, ib.albedo);
}

TEST(SampleIdentity, LatentMeanNearZeroOverManyDraws) {
    Rng rng(7);
    const auto g = test_group(0.5, 0.02);
    Vec coord_sum(kIdentityDim, 0.0);
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const auto id = sample_identity(g, rng, i);
        for (int k = 0; k < kIdentityDim; ++k) coord_sum[static_cast<std::size_t>(k)] += id.latent[static_cast<std::size_t>(k)];
    }
    for (double s : coord_sum) EXPECT_NEAR(s / n, 0.0, 0.1);
}

TEST(SampleIdentity, AlbedoStaysWithinTruncationAndUnitInterval) {
    Rng rng(9);
    const auto g = test_group(0.9, 0.08);
    for (int i = 0; i < 500; ++i) {
        const auto id = sample_identity(g, rng, i);
        EXPECT_GE(id.albedo, g.albedo_mean - 3.0 * g.albedo_spread - 1e-12);
        EXPECT_LE(id.albedo, 1.0);
        EXPECT_GT(id.albedo, 0.0);
    }
}

TEST(Intervene, SingleFieldChange) {
    const auto base = AttributeVector::neutral();
    const auto out = intervene(base, {Factor::pose_yaw, 30.0});
    EXPECT_DOUBLE_EQ(out.yaw_deg, 30.0);
    const auto changed = changed_factors(base, out);
    ASSERT_EQ(changed.size(), 1u);
    EXPECT_EQ(changed[0], Factor::pose_yaw);
}

TEST(Intervene, RangeErrorNamesFactorAndBounds) {
    const auto base = AttributeVector::neutral();
    try {
        intervene(base, {Factor::light_intensity, 0.9});
        FAIL() << "expected RangeError";
    } catch (const RangeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("light_intensity"), std::string::npos);
        EXPECT_NE(msg.find("0.2"), std::string::npos);
        EXPECT_NE(msg.find("0.8"), std::string::npos);
    }
    EXPECT_THROW(intervene(base, {Factor::pose_yaw, 31.0}), RangeError);
    EXPECT_THROW(intervene(base, {Factor::pose_pitch, -30.5}), RangeError);
    EXPECT_THROW(intervene(base, {Factor::expression, 5.0}), RangeError);
    EXPECT_THROW(intervene(base, {Factor::light_dir, 4.0}), RangeError);
}

TEST(Intervene, ExpressionDerivesFacsLookup) {
    const auto base = AttributeVector::neutral();
    const auto out = intervene(base, {Factor::expression, 3.0});
    EXPECT_EQ(out.expression_level, 3);
    EXPECT_EQ(out.facs, facs_for_level(3));
    EXPECT_DOUBLE_EQ(out.yaw_deg, base.yaw_deg);
    EXPECT_EQ(out.light_dir, base.light_dir);
    const auto changed = changed_factors(base, out);
    ASSERT_EQ(changed.size(), 1u);
    EXPECT_EQ(changed[0], Factor::expression);
}

TEST(FacsLookup, MagnitudesScaleFixedPattern) {
    EXPECT_EQ(facs_for_level(0), (std::array<double, 4>{0, 0, 0, 0}));
    const auto full = facs_for_level(4);
    const auto half = facs_for_level(2);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(half[static_cast<std::size_t>(j)], 0.5 * full[static_cast<std::size_t>(j)], 1e-15);
    EXPECT_THROW(facs_for_level(5), RangeError);
}

TEST(Render, LowAlbedoDarkerThanHighAlbedoUnderSideLight) {
    Rng rng(3);
    auto id_dark = sample_identity(test_group(0.35, 0.0), rng, 0);
    auto id_light = id_dark;
    id_light.albedo = 0.9;
    AttributeVector attrs = AttributeVector::neutral();
    attrs = intervene(attrs, {Factor::light_dir, static_cast<double>(static_cast<int>(LightDir::left))});
    attrs = intervene(attrs, {Factor::light_intensity, 0.2});
    const RenderParams params;
    const double dark = image_mean(render(id_dark, attrs, params));
    const double light = image_mean(render(id_light, attrs, params));
    EXPECT_LT(dark, light);
}

TEST(Render, DeterministicPixels) {
    Rng rng(4);
    const auto id = sample_identity(test_group(0.6, 0.05), rng, 1);
    AttributeVector attrs = intervene(AttributeVector::neutral(), {Factor::pose_yaw, 15.0});
    const RenderParams params;
    const auto a = render(id, attrs, params);
    const auto b = render(id, attrs, params);
    EXPECT_EQ(a.pixels, b.pixels);
}

TEST(Render, YawDifferenceConfinedToFaceRegion) {
    Rng rng(5);
    const auto id = sample_identity(test_group(0.7, 0.0), rng, 2);
    RenderParams params;
    params.background = 0.0;
    const auto a = render(id, AttributeVector::neutral(), params);
    const auto b = render(id, intervene(AttributeVector::neutral(), {Factor::pose_yaw, 30.0}), params);
    std::size_t diff_pixels = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool face = a.pixels[i] != 0.0f || b.pixels[i] != 0.0f;  // union of coverage
        if (a.pixels[i] != b.pixels[i]) {
            ++diff_pixels;
            EXPECT_TRUE(face);  // background must match bit-exactly
        }
    }
    EXPECT_GT(diff_pixels, 0u);
}

TEST(Render, DiffuseMonotoneInLightIntensity) {
    Rng rng(6);
    const auto id = sample_identity(test_group(0.55, 0.0), rng, 3);
    RenderParams params;
    for (LightDir dir : {LightDir::front, LightDir::left, LightDir::top}) {
        AttributeVector lo = intervene(AttributeVector::neutral(), {Factor::light_dir, static_cast<double>(static_cast<int>(dir))});
        AttributeVector hi = lo;
        lo = intervene(lo, {Factor::light_intensity, 0.3});
        hi = intervene(hi, {Factor::light_intensity, 0.7});
        const auto a = render(id, lo, params);
        const auto b = render(id, hi, params);
        for (std::size_t i = 0; i < a.pixels.size(); ++i) EXPECT_GE(b.pixels[i], a.pixels[i] - 1e-6f);
    }
}

TEST(Render, PixelsInUnitInterval) {
    Rng rng(8);
    const auto reg = default_registry();
    for (int g = 0; g < kNumGroups; ++g) {
        const auto id = sample_identity(reg[static_cast<std::size_t>(g)], rng, g);
        const auto obs = render(id, intervene(AttributeVector::neutral(), {Factor::light_intensity, 0.8}), RenderParams{});
        for (float p : obs.pixels) {
            EXPECT_GE(p, 0.0f);
            EXPECT_LE(p, 1.0f);
        }
    }
}

TEST(GenerateCohort, MinimalCohortOnePerGroup) {
    CohortSpec spec;
    spec.identities_per_group = 1;
    spec.variants_per_identity = 1;
    spec.plan.clear();
    spec.seed = 11;
    const auto obs = generate_cohort(spec, default_registry(), RenderParams{});
    ASSERT_EQ(obs.size(), 5u);
    std::set<int> groups;
    for (const auto& o : obs) groups.insert(o.group_id);
    EXPECT_EQ(groups.size(), 5u);
}

TEST(GenerateCohort, DeskCohortCount) {
    CohortSpec spec;
    spec.identities_per_group = 20;
    spec.variants_per_identity = 10;
    spec.plan = default_intervention_plan();
    spec.seed = 12;
    const auto obs = generate_cohort(spec, default_registry(), RenderParams{});
    EXPECT_EQ(obs.size(), 1000u);
}

TEST(GenerateCohort, PaperScaleCount) {
    CohortSpec spec;
    spec.identities_per_group = 200;
    spec.variants_per_identity = 10;
    spec.plan = default_intervention_plan();
    spec.seed = 13;
    const auto obs = generate_cohort(spec, default_registry(), RenderParams{});
    EXPECT_EQ(obs.size(), 10000u);
}

TEST(GenerateCohort, VariantsShareIdentityAndDifferInExactlyOneFactor) {
    CohortSpec spec;
    spec.identities_per_group = 2;
    spec.variants_per_identity = 10;
    spec.plan = default_intervention_plan();
    spec.seed = 14;
    const auto reg = default_registry();
    const auto obs = generate_cohort(spec, reg, RenderParams{});
    const auto ids = sample_identities(spec, reg);
    std::map<int, std::vector<const Observation*>> by_id;
    for (const auto& o : obs) by_id[o.identity_id].push_back(&o);
    ASSERT_EQ(by_id.size(), 10u);
    const auto base = AttributeVector::neutral();
    for (const auto& [id, variants] : by_id) {
        ASSERT_EQ(variants.size(), 10u);
        for (const auto* v : variants) {
            const auto changed = changed_factors(base, v->attrs);
            EXPECT_EQ(changed.size(), 1u);  // ceteris paribus against the neutral base
        }
        // all variants belong to the same identity spec
        for (const auto* v : variants) EXPECT_EQ(v->identity_id, id);
    }
    // identity latents are shared across variants by construction (one spec per id)
    EXPECT_EQ(ids.size(), 10u);
}

TEST(GenerateCohort, EmptyPlanWithMultipleVariantsIsConfigError) {
    CohortSpec spec;
    spec.identities_per_group = 1;
    spec.variants_per_identity = 3;
    spec.plan.clear();
    spec.seed = 15;
    EXPECT_THROW(generate_cohort(spec, default_registry(), RenderParams{}), ParamError);
}

TEST(GenerateCohort, DeterministicByteForByte) {
    CohortSpec spec;
    spec.identities_per_group = 3;
    spec.variants_per_identity = 4;
    spec.plan = {{Factor::pose_yaw, -30.0},
                 {Factor::light_dir, 1.0},
                 {Factor::light_intensity, 0.8},
                 {Factor::expression, 2.0}};
    spec.seed = 16;
    cohort::BiasPlant plant;
    plant.base_sigma = 0.02;
    plant.albedo_coupling = 0.05;
    const auto a = generate_cohort(spec, default_registry(), RenderParams{}, plant);
    const auto b = generate_cohort(spec, default_registry(), RenderParams{}, plant);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].pixels, b[i].pixels);
}

TEST(FamilyMagnitudes, CanonicalNormalization) {
    const auto base = AttributeVector::neutral();
    EXPECT_DOUBLE_EQ(pose_magnitude(base, intervene(base, {Factor::pose_yaw, 30.0})), 1.0);
    EXPECT_DOUBLE_EQ(pose_magnitude(base, intervene(base, {Factor::pose_yaw, -15.0})), 0.5);
    EXPECT_DOUBLE_EQ(pose_magnitude(base, base), 0.0);
    EXPECT_DOUBLE_EQ(light_magnitude(base, intervene(base, {Factor::light_dir, 1.0})), 1.0);
    EXPECT_DOUBLE_EQ(light_magnitude(base, intervene(base, {Factor::light_intensity, 0.8})), 1.0);
    EXPECT_DOUBLE_EQ(light_magnitude(base, intervene(base, {Factor::light_intensity, 0.65})), 0.5);
    EXPECT_DOUBLE_EQ(expression_magnitude(base, intervene(base, {Factor::expression, 2.0})), 0.5);
    EXPECT_DOUBLE_EQ(expression_magnitude(base, intervene(base, {Factor::expression, 4.0})), 1.0);
}

TEST(BiasPlant, NoiseSigmaCompositionIsLinearInVariance) {
    BiasPlant plant;
    plant.base_sigma = 0.05;
    plant.albedo_coupling = 0.1;
    plant.light = 0.42;
    plant.pose = 0.31;
    plant.expression = 0.27;
    plant.scale = 0.2;
    plant.group_sensitivity = {0.0, 1.0, 0.3, 0.6, 0.5};
    const auto base = AttributeVector::neutral();
    const auto lit = intervene(base, {Factor::light_dir, 2.0});
    // group 0 has zero sensitivity: only base + albedo terms
    const double s0 = plant.sigma_for(0, 0.85, base, lit);
    EXPECT_NEAR(s0 * s0, 0.05 * 0.05 + std::pow(0.1 * 0.15, 2), 1e-12);
    // group 1 at full sensitivity picks up scale^2 * 0.42 * mag(=1)
    const double s1 = plant.sigma_for(1, 0.35, base, lit);
    EXPECT_NEAR(s1 * s1, 0.05 * 0.05 + std::pow(0.1 * 0.65, 2) + 0.2 * 0.2 * 0.42, 1e-12);
}

TEST(Registry, DefaultsValid) {
    const auto reg = default_registry();
    validate_registry(reg);
    std::set<int> ids;
    for (const auto& g : reg) ids.insert(g.id);
    EXPECT_EQ(ids.size(), 5u);
    EXPECT_DOUBLE_EQ(reg[0].albedo_mean, 0.85);
    EXPECT_DOUBLE_EQ(reg[1].albedo_mean, 0.35);
}
