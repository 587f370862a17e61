// Enrolls a synthetic camera on four in-process servers and queries it with
// one image from the same camera and one from another camera.

#include <iostream>
#include <vector>

#include "sss_prnu/sss_prnu.hpp"

using namespace sss_prnu;

int main() {
  ProtocolConfig cfg;
  cfg.threshold = 0.1;
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(7);

  SyntheticCamera camera(64, 64, 0.02, 2.0, 1);
  SyntheticCamera other(64, 64, 0.02, 2.0, 2);
  std::vector<Image> shots;
  for (int i = 0; i < 20; ++i) shots.push_back(camera.capture());
  enroll(estimate_fingerprint(shots), "camera-1", cfg, cluster.links(), rng);

  for (auto* cam : {&camera, &other}) {
    const MatchResult r = query(cam->capture(), "camera-1", cfg, cluster.links(), rng);
    std::cout << "r=" << r.r << (r.matched ? " MATCH" : " NO-MATCH") << "\n";
  }
  return 0;
}
