#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "coat/bench.hpp"
#include "coat/errors.hpp"
#include "coat/rng.hpp"

namespace coat::bench {

namespace {

constexpr double kJuiceCopy = 0.5;      // P(juiciness copies sweetness)
constexpr double kFreshCopy = 0.6;      // P(freshness copies smell)
constexpr double kScoreWeight = 0.5;    // score's pull on market_potential
constexpr double kJuiceWeight = -0.5;   // juicy fruit bruises in transport, so it sells worse
constexpr std::array<double, 3> kNoise{0.15, 0.7, 0.15};

using Bank = std::map<int, std::vector<std::string>>;

const std::map<std::string, Bank>& phrase_bank() {
    static const std::map<std::string, Bank> bank{
        {"size",
         {{-1, {"The apple is rather small.", "It is a tiny fruit that fits in the palm.", "Its size is disappointingly modest."}},
          {0, {"", "Its size is unremarkable."}},
          {1, {"The apple is impressively large.", "It is a big, hefty fruit.", "Its generous size stands out."}}}},
        {"smell",
         {{-1, {"The aroma is off-putting.", "It gives off a musty smell.", "The scent is faintly unpleasant."}},
          {0, {"", "There is hardly any aroma."}},
          {1, {"It has a wonderful fragrance.", "The smell is floral and inviting.", "A sweet perfume rises from the skin."}}}},
        {"sweetness",
         {{-1, {"The flesh tastes sour.", "It is sharp and not sweet at all.", "The taste leans acidic."}},
          {0, {"", "The sweetness is middling."}},
          {1, {"It is delightfully sweet.", "The flesh is sugary and rich.", "Its sweetness is striking."}}}},
        {"juiciness",
         {{-1, {"The texture is dry and mealy.", "There is little juice in it.", "Each bite feels parched."}},
          {0, {"", "The juice content is ordinary."}},
          {1, {"It is bursting with juice.", "Juice runs down the chin with every bite.", "The flesh is wonderfully juicy."}}}},
        {"freshness",
         {{-1, {"It seems to have been stored too long.", "The skin looks tired and wrinkled.", "It does not feel freshly picked."}},
          {0, {"", "Hard to tell when it was picked."}},
          {1, {"It tastes freshly picked.", "The skin is taut and crisp.", "It is clearly fresh from the orchard."}}}},
        {"market_potential",
         {{-2, {"It would be nearly impossible to sell.", "No grocer would stock it."}},
          {-1, {"Few shoppers would pick it off the shelf.", "Its market appeal is weak."}},
          {0, {"", "Its commercial appeal is hard to judge."}},
          {1, {"It should sell reasonably well.", "Shoppers would likely give it a try."}},
          {2, {"Vendors would fight over this variety.", "It could become a best seller."}}}},
    };
    return bank;
}

const std::vector<std::string>& openers() {
    static const std::vector<std::string> v{"I tasted this apple today.", "A sample from a local orchard.",
                                            "Notes from this week's tasting.", "Tried one at the market."};
    return v;
}

FactorSpec spec(std::string name, std::string description, ValueSpace vs, std::vector<std::string> guideline) {
    FactorSpec f;
    f.name = std::move(name);
    f.description = std::move(description);
    f.value_space = std::move(vs);
    f.guideline = std::move(guideline);
    f.origin = FactorOrigin::GroundTruth;
    f.validate();
    return f;
}

std::vector<FactorSpec> apple_specs() {
    const ValueSpace t = ValueSpace::ternary();
    ValueSpace market = ValueSpace::range(-2, 2);
    market.level_meanings = {"very poor", "poor", "not mentioned", "good", "very good"};
    return {
        spec("size", "Physical size of the apple.", t, {"described as small", "size not mentioned or average", "described as large"}),
        spec("smell", "Aroma of the apple.", t, {"unpleasant smell", "no notable aroma", "pleasant fragrance"}),
        spec("sweetness", "Sweetness of the taste.", t, {"sour or not sweet", "average or not mentioned", "sweet"}),
        spec("juiciness", "Amount of juice in the flesh.", t, {"dry or mealy", "average or not mentioned", "juicy"}),
        spec("freshness", "How recently the apple was picked.", t, {"stale or stored long", "not mentioned", "freshly picked"}),
        spec("market_potential", "How well the apple would sell.", market,
             {"nearly unsellable", "weak appeal", "not mentioned", "would sell", "best-seller potential"}),
    };
}

}  // namespace

AppleData gen_apple(int n, std::uint64_t seed) {
    if (n < 10) throw InvariantError("gen_apple needs n >= 10");
    GroundTruth truth;
    truth.dag = graph::Dag({"size", "smell", "sweetness", "score", "juiciness", "market_potential", "freshness"},
                           {{"size", "score"},
                            {"smell", "score"},
                            {"sweetness", "score"},
                            {"sweetness", "juiciness"},
                            {"score", "market_potential"},
                            {"juiciness", "market_potential"},
                            {"smell", "freshness"}});
    truth.target = "score";
    truth.parents = {"size", "smell", "sweetness"};
    truth.children = {"market_potential"};
    truth.spouses = {"juiciness"};
    truth.disturbing = {"freshness"};
    truth.factors = apple_specs();
    truth.mechanisms = {
        {"size", "uniform on {-1,0,1}"},
        {"smell", "uniform on {-1,0,1}"},
        {"sweetness", "uniform on {-1,0,1}"},
        {"score", "clip(3 + size + smell + sweetness + e, 1, 5), e in {-1,0,1} w.p. 0.15/0.7/0.15"},
        {"juiciness", "copies sweetness w.p. 0.5, else uniform on {-1,0,1}"},
        {"market_potential", "m = 0.5*(score-3) - 0.5*juiciness; floor(m) + Bernoulli(m - floor(m))"},
        {"freshness", "copies smell w.p. 0.6, else uniform on {-1,0,1}"},
    };

    std::vector<RawSample> samples;
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
        const int size = static_cast<int>(rng.integer(-1, 1));
        const int smell = static_cast<int>(rng.integer(-1, 1));
        const int sweet = static_cast<int>(rng.integer(-1, 1));
        const int e = static_cast<int>(rng.categorical(kNoise)) - 1;
        const int score = std::clamp(3 + size + smell + sweet + e, 1, 5);
        const int juice = rng.bernoulli(kJuiceCopy) ? sweet : static_cast<int>(rng.integer(-1, 1));
        const double m = std::clamp(kScoreWeight * (score - 3) + kJuiceWeight * juice, -2.0, 2.0);
        const double fl = std::floor(m);
        const int market = static_cast<int>(fl) + (rng.bernoulli(m - fl) ? 1 : 0);
        const int fresh = rng.bernoulli(kFreshCopy) ? smell : static_cast<int>(rng.integer(-1, 1));

        char id[32];
        std::snprintf(id, sizeof id, "apple-%04d", i + 1);
        const std::map<std::string, int> levels{{"size", size},       {"smell", smell},         {"sweetness", sweet},
                                                {"juiciness", juice}, {"freshness", fresh},     {"market_potential", market}};
        std::vector<std::string> sentences;
        for (const auto& [name, level] : levels) {
            const auto& options = phrase_bank().at(name).at(level);
            const auto& s = options[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(options.size()) - 1))];
            if (!s.empty()) sentences.push_back(s);
            truth.latent_values[name][id] = level;
        }
        rng.shuffle(sentences);
        std::string text = openers()[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(openers().size()) - 1))];
        for (const auto& s : sentences) text += " " + s;
        samples.push_back({id, text, score});
    }
    Dataset ds(std::move(samples), "score", {1, 2, 3, 4, 5},
               {{"context", "Each sample is a gastronome's review of one apple; score is the reviewer's rating from 1 to 5."}});
    truth.validate();
    return {std::move(ds), std::move(truth)};
}

}  // namespace coat::bench
