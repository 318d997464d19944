static inline double fsqrt(double x)
{
	double r;
	__asm__ ("fsqrt" : "=t" (r) : "0" (x));
	return r;
}
