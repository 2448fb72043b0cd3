#include <cstdlib>
#include <iostream>

#include "sketchprune/error.hpp"
#include "sketchprune/testkit.hpp"

using namespace sketchprune;

// make_golden <out.json> [master_seed] [count]
int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_golden <out.json> [master_seed] [count]\n";
    return 1;
  }
  const std::uint64_t master = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 20240601;
  const int count = argc > 3 ? std::atoi(argv[3]) : 100;
  try {
    std::vector<testkit::GoldenCase> cases;
    for (const auto& s : testkit::sweep_shapes(master, count)) {
      cases.push_back(testkit::generate_case(s.seed, s.d, s.c, s.ell));
    }
    testkit::save_golden(cases, argv[1]);
    std::cout << "wrote " << cases.size() << " cases to " << argv[1] << '\n';
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
