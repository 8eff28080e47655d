#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "smoothbin/bytes.hpp"
#include "smoothbin/rng.hpp"

namespace smoothbin::ga {

// A candidate adversarial payload. Genes are either raw payload bytes or
// composite slots (donor index, length), depending on the attack.
struct Genome {
    std::vector<std::uint32_t> genes;
    double fitness = 0.0;
    bool evaluated = false;
};

struct GaConfig {
    int population_size = 50;
    int elite_count = 5;
    int tournament_size = 10;
    int selected_count = 10;
    double p1 = 0.1;  // probability a genome is mutated at all
    double p2 = 0.1;  // per-gene mutation probability once selected
    int max_generations = 10;
    int chunk_count = 4;
    std::uint64_t seed = 0;

    void check() const {
        if (population_size < 1 || elite_count < 0 ||
            selected_count < elite_count || tournament_size < 1 ||
            tournament_size > population_size || chunk_count < 1)
            throw ConfigError("invalid GA configuration");
        if (p1 < 0 || p1 > 1 || p2 < 0 || p2 > 1)
            throw ConfigError("mutation probabilities must be in [0,1]");
    }
};

// Elitism plus tournament selection: the top elite_count genomes by fitness
// (ties by lower index), then (selected_count - elite_count) tournament
// winners, each tournament drawing tournament_size uniformly with
// replacement and keeping its fittest member.
inline std::vector<Genome> select(const std::vector<Genome>& population,
                                  const GaConfig& cfg, Rng& rng) {
    cfg.check();
    for (const auto& g : population)
        if (!g.evaluated) throw DataError("select() on unevaluated genome");

    std::vector<std::size_t> by_fitness(population.size());
    std::iota(by_fitness.begin(), by_fitness.end(), 0);
    std::stable_sort(by_fitness.begin(), by_fitness.end(),
                     [&](std::size_t a, std::size_t b) {
                         return population[a].fitness > population[b].fitness;
                     });

    std::vector<Genome> out;
    const auto n_elite = std::min<std::size_t>(cfg.elite_count, population.size());
    for (std::size_t i = 0; i < n_elite; ++i)
        out.push_back(population[by_fitness[i]]);
    for (int i = 0; i < cfg.selected_count - cfg.elite_count; ++i) {
        std::size_t best = rng.below(population.size());
        for (int k = 1; k < cfg.tournament_size; ++k) {
            const std::size_t cand = rng.below(population.size());
            if (population[cand].fitness > population[best].fitness) best = cand;
        }
        out.push_back(population[best]);
    }
    return out;
}

// Chunk-alternating crossover: genes split into chunk_count contiguous
// near-equal chunks; offspring take chunks from alternating parents.
inline std::pair<Genome, Genome> crossover(const Genome& parent_a,
                                           const Genome& parent_b,
                                           int chunk_count) {
    if (parent_a.genes.size() != parent_b.genes.size())
        throw DataError("crossover parents have different gene counts");
    if (chunk_count < 1) throw ConfigError("chunk_count must be >= 1");
    const std::size_t n = parent_a.genes.size();

    Genome c1, c2;
    c1.genes.resize(n);
    c2.genes.resize(n);
    const auto chunks = static_cast<std::size_t>(chunk_count);
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t lo = n * c / chunks;
        const std::size_t hi = n * (c + 1) / chunks;
        const bool from_a_first = c % 2 == 0;
        for (std::size_t i = lo; i < hi; ++i) {
            c1.genes[i] = from_a_first ? parent_a.genes[i] : parent_b.genes[i];
            c2.genes[i] = from_a_first ? parent_b.genes[i] : parent_a.genes[i];
        }
    }
    return {std::move(c1), std::move(c2)};
}

using GeneSampler = std::function<std::uint32_t(std::size_t gene_index, Rng&)>;

// With probability p1 the genome is selected for mutation; each gene is then
// independently resampled with probability p2.
inline Genome mutate(Genome genome, double p1, double p2,
                     const GeneSampler& resample, Rng& rng) {
    if (rng.next_double() >= p1) return genome;
    for (std::size_t i = 0; i < genome.genes.size(); ++i) {
        if (rng.next_double() < p2) {
            genome.genes[i] = resample(i, rng);
            genome.evaluated = false;
        }
    }
    return genome;
}

}  // namespace smoothbin::ga
