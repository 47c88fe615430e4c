#include <fstream>

#include "helpers.hpp"
#include "oracles.hpp"

TEST(Synthetic, ZeroNoiseCollapsesToPrototype) {
  fm::SyntheticWorld w = fmtest::small_world(3, 0.0, 0.0);
  const fm::EmbeddingStore st = fm::synthetic_generate(w);
  for (std::size_t k = 0; k < w.num_classes; ++k) {
    const fm::Vec proto = w.prototype(k);
    for (std::size_t p = 0; p < w.num_templates; ++p) {
      EXPECT_EQ(st.text_embedding(p, k), st.text_embedding(0, k));
      EXPECT_NEAR(fm::cosine(st.text_embedding(p, k), proto), 1.0, 1e-7);
    }
  }
  for (std::size_t i = 0; i < st.num_images(); ++i) {
    EXPECT_EQ(st.image_embedding(i), st.text_embedding(0, st.labels[i]));
  }
}

TEST(Synthetic, DeterministicBitwise) {
  const auto w = fmtest::small_world(11);
  EXPECT_EQ(fm::synthetic_generate(w), fm::synthetic_generate(w));
  EXPECT_EQ(fm::encode_store(fm::synthetic_generate(w)), fm::encode_store(fm::synthetic_generate(w)));
}

TEST(Synthetic, SplitsDiffer) {
  const auto w = fmtest::small_world(11);
  const auto tr = fm::synthetic_generate(w, fm::SplitTag::Train);
  const auto te = fm::synthetic_generate(w, fm::SplitTag::Test);
  EXPECT_EQ(tr.text, te.text);
  EXPECT_NE(tr.images, te.images);
}

TEST(Synthetic, NearestPrototypeHighDimension) {
  fm::SyntheticWorld w;
  w.seed = 5;
  w.num_classes = 2;
  w.num_templates = 1;
  w.dim = 512;
  w.images_per_class = 500;
  w.sigma_image = 0.1;
  const fm::Vec p0 = w.prototype(0);
  const fm::Vec p1 = w.prototype(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < w.num_images(); ++i) {
    const fm::Vec v = w.image_embedding(fm::SplitTag::Test, i);
    const std::size_t pred = fm::cosine(v, p0) >= fm::cosine(v, p1) ? 0 : 1;
    correct += pred == w.image_label(i) ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(correct) / 1000.0, 0.99);
}

TEST(Synthetic, TemplatesDistinctPerClass) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto w = fmtest::small_world(seed);
    for (std::size_t k = 0; k < w.num_classes; ++k) {
      for (std::size_t a = 0; a < w.num_templates; ++a) {
        for (std::size_t b = a + 1; b < w.num_templates; ++b) {
          EXPECT_LT(fm::cosine(w.text_embedding(a, k), w.text_embedding(b, k)), 1.0 - 1e-9);
        }
      }
    }
  }
}

TEST(Synthetic, InvalidWorld) {
  fm::SyntheticWorld w;
  w.dim = 1;
  EXPECT_FM_ERROR(fm::synthetic_generate(w), fm::ErrorCode::InvalidConfig);
  w = {};
  w.sigma_image = -0.5;
  EXPECT_FM_ERROR(fm::synthetic_generate(w), fm::ErrorCode::InvalidConfig);
}

TEST(Encoders, SyntheticAndStoreAgree) {
  const auto w = fmtest::small_world(2);
  const fm::SyntheticEncoder enc(w, fm::SplitTag::Train);
  const auto st = fm::synthetic_generate(w);
  const fm::StoreEncoder from_store(st);
  const std::string prompt = fm::render_prompt(st.templates[3], st.class_names[4]);
  EXPECT_EQ(enc.encode_text(prompt), enc.encode_text(prompt));
  const fm::Vec a = enc.encode_text(prompt);
  const fm::Vec b = from_store.encode_text(prompt);
  for (std::size_t d = 0; d < a.size(); ++d) EXPECT_NEAR(a[d], b[d], 1e-6);
  EXPECT_FM_ERROR(enc.encode_text("a photo of a unicorn."), fm::ErrorCode::UnknownPrompt);
  EXPECT_FM_ERROR(from_store.encode_text("nothing"), fm::ErrorCode::UnknownPrompt);
  EXPECT_FM_ERROR(enc.encode_image(w.num_images()), fm::ErrorCode::InvalidConfig);
}

TEST(Store, NormsAfterLoad) {
  const auto st = fm::decode_store(fm::encode_store(fm::synthetic_generate(fmtest::small_world(8))));
  for (std::size_t i = 0; i < st.num_images(); ++i) EXPECT_NEAR(fm::norm(st.image_embedding(i)), 1.0, 1e-12);
  for (std::size_t p = 0; p < st.num_templates(); ++p) {
    for (std::size_t k = 0; k < st.num_classes(); ++k) EXPECT_NEAR(fm::norm(st.text_embedding(p, k)), 1.0, 1e-12);
  }
}

TEST(Store, RoundTripRandom) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto st = oracle::random_store(seed);
    const auto bytes = fm::encode_store(st);
    EXPECT_EQ(fm::decode_store(bytes), st) << seed;
    EXPECT_EQ(fm::encode_store(fm::decode_store(bytes)), bytes);
  }
}

TEST(Store, FileRoundTrip) {
  fmtest::TempDir dir("store");
  const auto st = fm::synthetic_generate(fmtest::small_world(9));
  fm::store_write(st, dir.file("a.fmes"));
  EXPECT_EQ(fm::store_read(dir.file("a.fmes")), st);
  EXPECT_FM_ERROR(fm::store_read(dir.file("missing.fmes")), fm::ErrorCode::IoError);
}

TEST(Store, HeaderLayout) {
  const auto st = oracle::random_store(3);
  const auto bytes = fm::encode_store(st);
  ASSERT_GE(bytes.size(), 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FMES");
  const auto u32 = [&](std::size_t at) {
    return std::uint32_t{bytes[at]} | std::uint32_t{bytes[at + 1]} << 8 | std::uint32_t{bytes[at + 2]} << 16 |
           std::uint32_t{bytes[at + 3]} << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), st.dim);
  EXPECT_EQ(u32(12), st.num_templates());
  EXPECT_EQ(u32(16), st.num_classes());
  EXPECT_EQ(u32(20), st.num_images());
}

TEST(Store, BadMagic) {
  auto bytes = fm::encode_store(oracle::random_store(1));
  bytes[0] = 'X';
  EXPECT_FM_ERROR(fm::decode_store(bytes), fm::ErrorCode::BadMagic);
  EXPECT_FM_ERROR(fm::decode_store({}), fm::ErrorCode::BadMagic);
}

TEST(Store, UnsupportedVersion) {
  auto bytes = fm::encode_store(oracle::random_store(1));
  bytes[4] = 2;
  EXPECT_FM_ERROR(fm::decode_store(bytes), fm::ErrorCode::UnsupportedVersion);
}

TEST(Store, TruncationAnywhere) {
  const auto bytes = fm::encode_store(oracle::random_store(4));
  for (std::size_t cut = 5; cut < bytes.size(); cut += 7) {
    const std::vector<unsigned char> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_FM_ERROR(fm::decode_store(part), fm::ErrorCode::CorruptStore);
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_FM_ERROR(fm::decode_store(longer), fm::ErrorCode::CorruptStore);
}

TEST(Store, RejectsNormDriftAndBadLabels) {
  auto st = oracle::random_store(6);
  st.text[0] *= 1.5f;
  EXPECT_FM_ERROR(fm::encode_store(st), fm::ErrorCode::CorruptStore);

  st = fm::synthetic_generate(fmtest::small_world(1));
  st.labels[0] = static_cast<std::uint32_t>(st.num_classes());
  EXPECT_FM_ERROR(st.validate(), fm::ErrorCode::CorruptStore);
}

TEST(Store, MildDriftRenormalizedOnLoad) {
  auto st = fm::synthetic_generate(fmtest::small_world(1));
  for (std::size_t d = 0; d < st.dim; ++d) st.images[d] *= 1.0005f;
  const auto back = fm::decode_store(fm::encode_store(st));
  EXPECT_NEAR(fm::norm(back.image_embedding(0)), 1.0, 1e-12);
}
