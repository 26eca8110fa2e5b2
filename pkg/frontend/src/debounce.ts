/** Suppress accidental double-submits (e.g. rapid double-click on "yes"). */
export function once<Args extends unknown[]>(
  fn: (...args: Args) => void,
  windowMs = 400,
  now: () => number = Date.now,
): (...args: Args) => boolean {
  let last = -Infinity;
  return (...args: Args): boolean => {
    const t = now();
    if (t - last < windowMs) return false;
    last = t;
    fn(...args);
    return true;
  };
}
