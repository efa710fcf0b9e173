// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdio>

int main() {
  std::puts("sepad: command-line interface under construction");
  return 1;
}
