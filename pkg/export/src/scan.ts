/** The four 2D scan orderings, matching the archive consumer's convention:
 * fwd is row-major, tfwd column-major, bwd/tbwd their exact reverses. */

export const DIRECTIONS = ["fwd", "bwd", "tfwd", "tbwd"] as const;
export type Direction = (typeof DIRECTIONS)[number];

/** Row-major cell index visited at each sequence position. */
export function sequenceOrder(direction: Direction, height: number, width: number): number[] {
  const size = height * width;
  const order: number[] = new Array(size);
  if (direction === "fwd" || direction === "bwd") {
    for (let p = 0; p < size; p++) order[p] = p;
  } else {
    let p = 0;
    for (let j = 0; j < width; j++) {
      for (let i = 0; i < height; i++) order[p++] = i * width + j;
    }
  }
  if (direction === "bwd" || direction === "tbwd") order.reverse();
  return order;
}
