#pragma once

// Synthetic CA traces for three fold-like shapes, pushed through the real
// preprocessing pipeline so training tests see genuine map stacks.

#include <cmath>
#include <string>
#include <vector>

#include "foldmap/dataset.hpp"
#include "foldmap/matrices.hpp"
#include "foldmap/model.hpp"
#include "foldmap/rng.hpp"
#include "foldmap/structure.hpp"

namespace synthetic {

inline constexpr int kClasses = 3;

inline foldmap::CathLabel label_for(int cls) { return {cls + 1, 10 * (cls + 1), 100 + cls, 1}; }

/// cls 0: helix, 1: straight strand, 2: two-strand hairpin.
inline foldmap::DomainStructure make_structure(int cls, int index, foldmap::Rng& rng) {
  foldmap::DomainStructure s;
  s.domain_id = "s" + std::to_string(cls) + std::to_string(1000 + index).substr(1) + "A00";
  s.has_charges = true;
  const int n = 18 + static_cast<int>(rng.below(16));
  for (int i = 0; i < n; ++i) {
    double x = 0, y = 0, z = 0;
    if (cls == 0) {
      const double t = 100.0 * i * M_PI / 180.0;
      x = 2.3 * std::cos(t);
      y = 2.3 * std::sin(t);
      z = 1.5 * i;
    } else if (cls == 1) {
      x = 3.3 * i;
      y = 0.9 * (i % 2);
    } else {
      const int half = n / 2;
      x = 3.3 * (i < half ? i : n - 1 - i);
      y = (i < half ? 0.0 : 4.8) + 0.9 * (i % 2);
    }
    foldmap::Atom a;
    a.serial = i + 1;
    a.name = "CA";
    a.element = "C";
    a.residue_index = i + 1;
    a.residue_name = "ALA";
    a.position = {x + rng.uniform(-0.3, 0.3), y + rng.uniform(-0.3, 0.3), z + rng.uniform(-0.3, 0.3)};
    a.charge = rng.uniform(-0.5, 0.5);
    a.radius = 1.9;
    s.atoms.push_back(a);
  }
  return s;
}

struct Corpus {
  std::vector<foldmap::DomainStructure> structures;
  std::vector<foldmap::MapStack> stacks;
  std::vector<foldmap::CathLabel> labels;
};

/// `per_class` instances of each class, interleaved by class.
inline Corpus make_corpus(int per_class, std::uint64_t seed) {
  foldmap::Rng rng(seed);
  Corpus c;
  for (int i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < kClasses; ++cls) {
      c.structures.push_back(make_structure(cls, i, rng));
      c.stacks.push_back(foldmap::build_map_stack(c.structures.back(), foldmap::Selection::CA));
      c.labels.push_back(label_for(cls));
    }
  }
  return c;
}

inline foldmap::LabeledStacks labeled(const Corpus& c, std::size_t begin, std::size_t end,
                                      const foldmap::Vocabulary& vocab) {
  foldmap::LabeledStacks out;
  for (std::size_t i = begin; i < end; ++i) {
    out.stacks.push_back(c.stacks[i]);
    out.labels.push_back(vocab.encode(c.labels[i]));
  }
  return out;
}

}  // namespace synthetic
