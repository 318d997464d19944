static inline void bump(unsigned *n)
{
	__asm__ ("incl %0" : "+r" (*n));
}
