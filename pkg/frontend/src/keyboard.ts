/** Keyboard bindings: K = keep, D = drop, U = undo the last decision. */

export interface SessionKeys {
  keep(): unknown;
  drop(): unknown;
  undo(): unknown;
}

export interface KeyEventLike {
  key?: string;
}

// Listener is loosely typed so both DOM targets and node EventTargets fit.
export interface KeyTarget {
  addEventListener(type: string, listener: (event: any) => void): void;
  removeEventListener(type: string, listener: (event: any) => void): void;
}

export function bindKeyboard(session: SessionKeys, target: KeyTarget): () => void {
  const handler = (event: KeyEventLike) => {
    const key = (event.key ?? "").toLowerCase();
    if (key === "k") session.keep();
    else if (key === "d") session.drop();
    else if (key === "u") session.undo();
  };
  target.addEventListener("keydown", handler);
  return () => target.removeEventListener("keydown", handler);
}
