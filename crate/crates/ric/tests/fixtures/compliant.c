static inline unsigned bswap32(unsigned x)
{
	__asm__ ("bswap %0" : "+r" (x));
	return x;
}

static inline unsigned add(unsigned a, unsigned b)
{
	__asm__ ("addl %2, %0" : "=r" (a) : "0" (a), "r" (b) : "cc");
	return a;
}
