#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "ubd/metrics.hpp"
#include "ubd/registration.hpp"

namespace ubd {
namespace {

TEST(RegistrationConfig, Validation) {
  RegistrationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.pyramid_levels = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.demons_max_step = 0.0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.demons_sigma_fluid = -1.0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(Affine, AlignedPairGivesIdentityWithoutIterating) {
  const auto ph = test::registration_phantom();
  int iters = -1;
  const auto t = register_affine(ph.image, ph.image, {}, &iters);
  EXPECT_EQ(iters, 0);
  const auto id = AffineTransform2D::identity();
  for (int i = 0; i < 4; ++i) EXPECT_LE(std::abs(t.linear[i] - id.linear[i]), 1e-3);
  EXPECT_LE(std::hypot(t.translation[0], t.translation[1]), 0.1);
}

TEST(Affine, RecoversTranslation) {
  const auto ph = test::registration_phantom();
  const Image fixed = resample_image(ph.image, DisplacementField::uniform(64, 64, 3.0, -2.0));
  const auto t = register_affine(ph.image, fixed, {});
  EXPECT_NEAR(t.translation[0], 3.0, 0.5);
  EXPECT_NEAR(t.translation[1], -2.0, 0.5);
}

TEST(Affine, RecoversRotation) {
  const auto ph = test::registration_phantom();
  const Image fixed = resample_image(ph.image, affine_to_field(AffineTransform2D::rotation_degrees(5.0), 64, 64));
  const auto t = register_affine(ph.image, fixed, {});
  EXPECT_NEAR(t.rotation_degrees_estimate(), 5.0, 1.0);
}

TEST(Affine, DimensionMismatchThrows) {
  EXPECT_THROW(register_affine(Image::filled(8, 8, 0.1), Image::filled(9, 8, 0.1), {}), InputError);
}

TEST(Deformable, AlignedPairExitsImmediately) {
  const auto ph = test::registration_phantom();
  const auto r = register_deformable(ph.image, ph.image, AffineTransform2D::identity(), {});
  EXPECT_LE(r.field.max_magnitude(), 0.1);
  EXPECT_EQ(r.iterations_used.deformable, 0);
}

TEST(Deformable, RecoversBumpField) {
  const auto ph = test::registration_phantom();
  const auto bump = test::bump_field(64, 64, 24.0, 30.0, 8.0, 4.0);
  const Image fixed = resample_image(ph.image, bump);
  const auto r = register_deformable(ph.image, fixed, AffineTransform2D::identity(), {});
  EXPECT_LE(test::mean_endpoint_error(r.field, bump, warp_mask(ph.mask, bump)), 1.0);
}

TEST(Deformable, BlobOntoDilatedBlob) {
  const Image moving = test::blob_image(48, 48, 23.5, 23.5, 9.0);
  const Image fixed = test::blob_image(48, 48, 23.5, 23.5, 12.0);
  const auto mmask = test::disk_mask(48, 48, 23.5, 23.5, 9.0);
  const auto fmask = test::disk_mask(48, 48, 23.5, 23.5, 12.0);
  const auto r = register_images(moving, fixed, {});
  EXPECT_GE(dsc(warp_mask(mmask, r.field), fmask).value(0), 0.9);
}

TEST(Deformable, ObservedUpdatesRespectMaxStep) {
  const auto ph = test::registration_phantom();
  const Image fixed = resample_image(ph.image, test::bump_field(64, 64, 40.0, 36.0, 6.0, 4.0));
  RegistrationConfig cfg;
  cfg.demons_max_step = 0.6;
  int calls = 0;
  double largest = 0.0;
  register_deformable(ph.image, fixed, AffineTransform2D::identity(), cfg, [&](int, int, double m) {
    ++calls;
    largest = std::max(largest, m);
  });
  EXPECT_GT(calls, 0);
  EXPECT_GT(largest, 0.0);
  EXPECT_LE(largest, cfg.demons_max_step + 1e-12);
}

TEST(Register, AlignedPairFieldIsSmall) {
  const auto ph = test::registration_phantom();
  EXPECT_LE(register_images(ph.image, ph.image, {}).field.max_magnitude(), 0.2);
}

TEST(Register, AffinePlusBumpComposition) {
  const auto ph = test::registration_phantom();
  const auto bump = test::bump_field(64, 64, 28.0, 30.0, 8.0, 3.0);
  const auto truth = compose_fields(bump, DisplacementField::uniform(64, 64, 2.0, -1.0));
  const Image fixed = resample_image(ph.image, truth);
  const auto r = register_images(ph.image, fixed, {});
  EXPECT_LE(test::mean_endpoint_error(r.field, truth, warp_mask(ph.mask, truth)), 1.0);
}

TEST(Register, NeverWorseThanIdentityOnRandomPairs) {
  Rng rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    const Image a = gaussian_smooth(test::random_image(rng, 32, 32), 1.5);
    const Image b = gaussian_smooth(test::random_image(rng, 32, 32), 1.5);
    RegistrationConfig cfg;
    cfg.pyramid_levels = 2;
    const auto t = register_affine(a, b, cfg);
    const double identity = ssd(a, b);
    EXPECT_LE(ssd(resample_image(a, affine_to_field(t, 32, 32)), b), identity + 1e-9);
    const auto r = register_deformable(a, b, t, cfg);
    EXPECT_LE(r.final_ssd, identity + 1e-9);
    EXPECT_NEAR(r.final_ssd, ssd(resample_image(a, r.field), b), 1e-9);
  }
}

TEST(Register, Deterministic) {
  const auto ph = test::registration_phantom();
  const Image fixed = generate_phantom(PhantomSpec::sample(12, Sex::female)).image;
  const auto a = register_images(ph.image, fixed, {});
  const auto b = register_images(ph.image, fixed, {});
  EXPECT_EQ(a.field, b.field);
  EXPECT_EQ(a.final_ssd, b.final_ssd);
}

TEST(Register, StableAcrossPyramidDepth) {
  const auto a = generate_phantom(PhantomSpec::sample(21, Sex::male, 64, 0.0));
  const auto b = generate_phantom(PhantomSpec::sample(22, Sex::female, 64, 0.0));
  for (int levels = 1; levels <= 3; ++levels) {
    RegistrationConfig lo;
    lo.pyramid_levels = levels;
    RegistrationConfig hi = lo;
    hi.pyramid_levels = levels + 1;
    const double d_lo = dsc(warp_mask(a.mask, register_images(a.image, b.image, lo).field), b.mask).macro_average;
    const double d_hi = dsc(warp_mask(a.mask, register_images(a.image, b.image, hi).field), b.mask).macro_average;
    EXPECT_LT(std::abs(d_lo - d_hi), 0.05) << "levels " << levels;
  }
}

}  // namespace
}  // namespace ubd
