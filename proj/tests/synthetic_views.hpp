#ifndef HCMARL_TESTS_SYNTHETIC_VIEWS_HPP_
#define HCMARL_TESTS_SYNTHETIC_VIEWS_HPP_

// Shared-latent-state generator: every group of agents observes the same
// latent state z in [0, K) through its own noisy view
//   o_i = [ signal * e_z + N(0, shared_noise^2) ,  N(0, private_noise^2) ].
// The private block carries nothing the agents share, so only a head that
// reads the latent block can make agents agree.

#include <vector>

#include "hcmarl/rng.hpp"
#include "hcmarl/tensor.hpp"

namespace hcmarl::testing {

struct SyntheticViews {
  int latent_states = 4;
  int agents = 4;
  int private_dim = 8;
  double signal = 3.0;
  double shared_noise = 0.3;
  double private_noise = 3.0;

  int input_dim() const { return latent_states + private_dim; }

  // groups * agents rows; latents (one per group) written to `latents`.
  Matrix sample(int groups, Rng& rng, std::vector<int>* latents = nullptr) const {
    Matrix x(static_cast<Index>(groups) * agents, input_dim());
    if (latents) latents->clear();
    for (int g = 0; g < groups; ++g) {
      const int z = rng.uniform_int(latent_states);
      if (latents) latents->push_back(z);
      for (int a = 0; a < agents; ++a) {
        const Index r = static_cast<Index>(g) * agents + a;
        for (int k = 0; k < latent_states; ++k) {
          x(r, k) = (k == z ? signal : 0.0) + shared_noise * rng.normal();
        }
        for (int k = 0; k < private_dim; ++k) {
          x(r, latent_states + k) = private_noise * rng.normal();
        }
      }
    }
    return x;
  }
};

}  // namespace hcmarl::testing

#endif  // HCMARL_TESTS_SYNTHETIC_VIEWS_HPP_
