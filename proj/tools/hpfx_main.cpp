#include <cstdio>
int main() { std::puts("hpfx: placeholder"); return 0; }
