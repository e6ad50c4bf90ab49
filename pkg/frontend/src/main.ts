import { ReviewApi } from "./api.js";
import { bindKeyboard } from "./keyboard.js";
import { ReviewSession, SessionView } from "./session.js";

function setText(doc: Document, id: string, text: string): void {
  const el = doc.getElementById(id);
  if (el !== null) el.textContent = text;
}

function setHidden(doc: Document, id: string, hidden: boolean): void {
  const el = doc.getElementById(id);
  if (el !== null) el.hidden = hidden;
}

export function render(view: SessionView, doc: Document): void {
  const { progress, current } = view;

  if (progress !== null) {
    const percent = progress.total === 0 ? 100 : (100 * progress.decided) / progress.total;
    const fill = doc.getElementById("progress-fill");
    if (fill !== null) fill.style.width = `${percent}%`;
    setText(
      doc,
      "progress-text",
      `${progress.decided} / ${progress.total} decided` +
        ` (${progress.kept} kept, ${progress.dropped} dropped)`,
    );
  }

  const parts: string[] = [view.online ? "online" : "offline"];
  if (view.queued > 0) parts.push(`${view.queued} queued`);
  setText(doc, "status-line", parts.join(", "));
  setText(doc, "error-line", view.lastError);
  setHidden(doc, "error-line", view.lastError === "");

  setHidden(doc, "card", current === null);
  setHidden(doc, "done", view.phase !== "done");
  if (view.phase === "done") {
    setText(
      doc,
      "done",
      view.queued > 0
        ? `All records reviewed; ${view.queued} decisions queued for delivery.`
        : "All records reviewed.",
    );
  }

  if (current !== null) {
    const image = doc.getElementById("image");
    if (image !== null && image.getAttribute("src") !== current.imageUrl) {
      image.setAttribute("src", current.imageUrl);
    }
    setText(doc, "record-id", current.id);
    setText(doc, "prompt", current.prompt || "(no prompt)");
    setText(doc, "style", current.style || "(no style)");
    setText(doc, "stage", current.stage || "(no stage)");
  }
}

export function bootstrap(doc: Document): ReviewSession {
  const api = new ReviewApi("");
  const session: ReviewSession = new ReviewSession(api, {
    annotator: "browser",
    onChange: () => render(session.view(), doc),
  });

  bindKeyboard(session, doc);
  doc.getElementById("btn-keep")?.addEventListener("click", () => session.keep());
  doc.getElementById("btn-drop")?.addEventListener("click", () => session.drop());
  doc.getElementById("btn-undo")?.addEventListener("click", () => session.undo());

  void session.start();
  return session;
}

if (typeof document !== "undefined") {
  bootstrap(document);
}
