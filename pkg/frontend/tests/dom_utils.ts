// The browser serializes rgba(r, g, b, 1) back as rgb(r, g, b), so alpha
// has to be parsed from either form.

export function alphaOf(span: HTMLElement): number {
  const bg = span.style.background;
  if (bg === "") return 0;
  const match = bg.match(/rgba\([^)]*,\s*([0-9.]+)\)/);
  if (match !== null) return Number(match[1]);
  return bg.startsWith("rgb(") ? 1 : 0;
}
