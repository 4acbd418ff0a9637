// Placeholder main; full CLI added with the io module.
int main() { return 0; }
