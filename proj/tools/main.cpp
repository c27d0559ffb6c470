#include <cstdio>

int main() {
  std::puts("mdembed: command-line interface under construction");
  return 0;
}
