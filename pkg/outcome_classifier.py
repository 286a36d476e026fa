"""
Rokhlin Model Checker - Outcome Classifier Module
=================================================
Classifica l'esito di un report di verifica e lo traduce in codice di uscita.
"""

from enum import Enum


class Verdict(Enum):
    OK = "OK"
    PREDICATE_FAILED = "Predicato violato"
    PIPELINE_FAILED = "Pipeline interrotta"
    CONFIG_ERROR = "Configurazione non valida"


EXIT_CODES = {
    Verdict.OK: 0,
    Verdict.PREDICATE_FAILED: 1,
    Verdict.PIPELINE_FAILED: 1,
    Verdict.CONFIG_ERROR: 2,
}


class OutcomeClassifier:
    """
    Classifica i report dei sottocomandi.

    1. Errore di configurazione → Configurazione non valida (uscita 2)
    2. Errore di pipeline (nessuna matching, copertura insufficiente, …)
       → Pipeline interrotta (uscita 1, report comunque scritto)
    3. Almeno una verifica con passed = False → Predicato violato (uscita 1)
    4. Altrimenti → OK (uscita 0)
    """

    def classify(self, report: dict) -> tuple[Verdict, str]:
        """
        Classifica un report.

        Returns:
            Tuple (verdetto, nota) con la nota che nomina la prima verifica fallita
        """
        if report.get("config_error"):
            return Verdict.CONFIG_ERROR, str(report["config_error"])

        if report.get("pipeline_error"):
            return Verdict.PIPELINE_FAILED, str(report["pipeline_error"])

        checks = report.get("checks", [])
        failed = [c for c in checks if not c.get("passed")]
        if failed:
            first = failed[0]
            note = (f"{first['name']}: {first['value']} non {first['relation']} {first['threshold']}"
                    f" ({first['operation']})")
            if len(failed) > 1:
                note += f" e altre {len(failed) - 1}"
            return Verdict.PREDICATE_FAILED, note

        if not checks:
            return Verdict.OK, "Nessuna verifica configurata"
        return Verdict.OK, ""

    def exit_code(self, verdict: Verdict) -> int:
        return EXIT_CODES[verdict]

    def get_classification_rules(self) -> str:
        """Restituisce una descrizione delle regole di classificazione."""
        return """
REGOLE DI CLASSIFICAZIONE DEI REPORT:

1. CONFIGURAZIONE NON VALIDA (uscita 2)
   - Condizione: il file di configurazione o un override --set non produce
     oggetti validi (mappa, punti, stadi, torre, funzioni test)
   - Azione: correggere la configurazione; nessun report viene scritto

2. PIPELINE INTERROTTA (uscita 1)
   - Condizione: nessuna matching sotto la soglia di uno stadio, torre con
     copertura insufficiente, campione ε-denso non trovato, curva aliasata
   - Azione: il report contiene l'errore e il valore raggiungibile

3. PREDICATO VIOLATO (uscita 1)
   - Condizione: almeno una verifica con valore non nella relazione
     richiesta rispetto alla soglia
   - Azione: la nota indica la prima verifica fallita e l'operazione che
     ha prodotto il valore

4. OK (uscita 0)
   - Condizione: tutte le verifiche configurate superate
"""
